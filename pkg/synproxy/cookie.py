"""32-bit SYN cookies: 5-bit time tick, 3-bit MSS index and a 24-bit SipHash of the 4-tuple.

Bit layout of the sequence number::

    31..27  t5       floor(now / 64) mod 32
    26..24  mss_idx  index into the MSS table
    23..0   hash24   low 24 bits of SipHash-2-4(key, src_ip|dst_ip|src_port|dst_port|t5)
"""
import os
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import BadHash, ConfigInvalid, StaleCookie
from .packet import FlowKey
from .utils.siphash import siphash24

TICK_SECONDS = 64
TICK_COUNT = 32
DEFAULT_MSS = 536
DEFAULT_MSS_TABLE = (536, 1220, 1300, 1440, 1460, 4096, 8960, 9000)
DEFAULT_WINDOW = 1
MAX_WINDOW = 3

_HASH_INPUT = struct.Struct('!IIHHB')


class Cookie(NamedTuple):
    t5: int
    mss_idx: int
    hash24: int

    def pack(self) -> int:
        return ((self.t5 & 0x1f) << 27) | ((self.mss_idx & 0x7) << 24) | (self.hash24 & 0xffffff)

    @classmethod
    def unpack(cls, value: int) -> 'Cookie':
        return cls((value >> 27) & 0x1f, (value >> 24) & 0x7, value & 0xffffff)


def pack(c: Cookie) -> int:
    return c.pack()


def unpack(value: int) -> Cookie:
    return Cookie.unpack(value)


@dataclass(frozen=True)
class CookieKey:
    secret: bytes

    def __post_init__(self):
        if len(self.secret) != 16:
            raise ValueError('cookie key must be 16 bytes, got {}'.format(len(self.secret)))

    @classmethod
    def from_hex(cls, text: str) -> 'CookieKey':
        try:
            secret = bytes.fromhex(text)
        except ValueError:
            raise ValueError('cookie key is not hex: {!r}'.format(text))
        return cls(secret)

    @classmethod
    def from_seed(cls, seed: int) -> 'CookieKey':
        return cls(np.random.default_rng(seed).bytes(16))

    @classmethod
    def generate(cls) -> 'CookieKey':
        return cls(os.urandom(16))

    def hex(self) -> str:
        return self.secret.hex()

    def __repr__(self):
        return 'CookieKey(<secret>)'


@dataclass(frozen=True)
class MssTable:
    values: Sequence[int] = DEFAULT_MSS_TABLE

    def __post_init__(self):
        values = tuple(int(v) for v in self.values)
        if len(values) != 8:
            raise ConfigInvalid('cookie.mss_table', 'needs exactly 8 values, got {}'.format(len(values)))
        if any(v < 536 or v > 65495 for v in values):
            raise ConfigInvalid('cookie.mss_table', 'values must lie in [536, 65495]')
        if any(a >= b for a, b in zip(values, values[1:])):
            raise ConfigInvalid('cookie.mss_table', 'values must be strictly increasing')
        object.__setattr__(self, 'values', values)

    def __getitem__(self, idx: int) -> int:
        return self.values[idx]

    def __len__(self):
        return len(self.values)


DEFAULT_TABLE = MssTable()


def tick(now: float) -> int:
    return int(now // TICK_SECONDS) % TICK_COUNT


def quantize_mss(mss: Optional[int], table: MssTable = DEFAULT_TABLE) -> int:
    """Largest index whose table value does not exceed `mss`; 0 below the table floor."""
    if mss is None:
        mss = DEFAULT_MSS
    idx = 0
    for i, v in enumerate(table.values):
        if v <= mss:
            idx = i
        else:
            break
    return idx


def compute_hash24(key: CookieKey, k: FlowKey, t5: int) -> int:
    return siphash24(key.secret, _HASH_INPUT.pack(k.src_ip, k.dst_ip, k.src_port, k.dst_port, t5)) & 0xffffff


def encode_cookie(key: CookieKey, k: FlowKey, now: float, client_mss: Optional[int],
                  table: MssTable = DEFAULT_TABLE) -> int:
    """
    Cookie sequence number for a SYN on flow `k`.

    `k` is the client-to-server tuple, the same one the client's final ACK carries, so that
    `verify_cookie` can recompute the hash from the ACK alone.
    """
    t5 = tick(now)
    return Cookie(t5, quantize_mss(client_mss, table), compute_hash24(key, k, t5)).pack()


def verify_cookie(key: CookieKey, k: FlowKey, ack: int, now: float, window: int = DEFAULT_WINDOW,
                  table: MssTable = DEFAULT_TABLE) -> int:
    """
    Check the acknowledgment number of a handshake-completing ACK.

    Parameters
    ----------
    key: CookieKey
    k: FlowKey
        tuple of the ACK (client to server)
    ack: int
        acknowledgment number, the cookie plus one
    now: float
        seconds
    window: int
        number of previous ticks still accepted

    Returns
    -------
    int
        the MSS encoded in the cookie

    Raises
    ------
    StaleCookie
        the tick is older than `window` ticks (or from the future)
    BadHash
        the tick is fresh but the hash does not match

    """
    c = Cookie.unpack((ack - 1) & 0xffffffff)
    current = int(now // TICK_SECONDS)
    if not any(c.t5 == (current - age) % TICK_COUNT for age in range(window + 1)):
        raise StaleCookie('cookie tick {} outside window {} at tick {}'.format(c.t5, window, current % TICK_COUNT))
    if c.hash24 != compute_hash24(key, k, c.t5):
        raise BadHash('cookie hash mismatch for {}'.format(k))
    return table[c.mss_idx]


class CookieCodec:
    """Key, MSS table and verification window of one engine, counting hash evaluations."""

    def __init__(self, key: CookieKey, table: MssTable = DEFAULT_TABLE, window: int = DEFAULT_WINDOW):
        if not 0 <= window <= MAX_WINDOW:
            raise ConfigInvalid('cookie.window', 'must be within 0..{}, got {}'.format(MAX_WINDOW, window))
        self.key = key
        self.table = table
        self.window = window
        self.hash_invocations = 0

    def encode(self, k: FlowKey, now: float, client_mss: Optional[int]) -> int:
        self.hash_invocations += 1
        return encode_cookie(self.key, k, now, client_mss, self.table)

    def verify(self, k: FlowKey, ack: int, now: float) -> int:
        try:
            mss = verify_cookie(self.key, k, ack, now, self.window, self.table)
        except BadHash:
            self.hash_invocations += 1
            raise
        self.hash_invocations += 1
        return mss

    def quantized(self, mss: Optional[int]) -> int:
        return self.table[quantize_mss(mss, self.table)]
