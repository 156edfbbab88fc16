"""Two-bit-per-slot whitelist of authenticated sources with second-chance sweeping.

Slots are packed four to a byte in a numpy uint8 array. A slot is 11 right after admit or a
successful check, 10 after one sweep, and 00 (absent) after the next one.
"""
import enum
import logging
from typing import Union

import numpy as np

from .errors import ConfigInvalid
from .packet import FlowKey
from .utils.siphash import siphash24

logger = logging.getLogger(__name__)

DEFAULT_MASK_BITS = 20
DEFAULT_SWEEP_PERIOD_S = 60.0

_LOW = np.uint8(0x55)
_FRESH = 0b11


class Granularity(str, enum.Enum):
    SOURCE_IP = 'source-ip'
    FLOW = 'flow'


def _popcount(arr: np.ndarray) -> int:
    return int(np.unpackbits(arr).sum())


class Whitelist:
    """
    Parameters
    ----------
    granularity: Granularity
        per source address, or per 4-tuple
    mask_bits: int
        log2 of the slot count; per-IP indexing uses the low `mask_bits` bits of the address
    hash_key: bytes
        16 byte SipHash key for per-flow indexing
    """

    def __init__(self, granularity: Granularity = Granularity.SOURCE_IP, mask_bits: int = DEFAULT_MASK_BITS,
                 hash_key: bytes = bytes(16)):
        if not 2 <= mask_bits <= 32:
            raise ConfigInvalid('whitelist.mask_bits', 'must be within 2..32, got {}'.format(mask_bits))
        self.granularity = Granularity(granularity)
        self.mask_bits = mask_bits
        self.slot_count = 1 << mask_bits
        self._mask = self.slot_count - 1
        self._hash_key = hash_key
        self._bits = np.zeros(self.slot_count // 4, dtype=np.uint8)
        self.lookups = 0

    @property
    def nbytes(self) -> int:
        return self._bits.nbytes

    def source_of(self, k: FlowKey) -> Union[int, FlowKey]:
        """What identifies the sender of a client-side segment under this granularity."""
        if self.granularity is Granularity.SOURCE_IP:
            return k.src_ip
        return k

    def slot_of(self, source: Union[int, FlowKey]) -> int:
        if self.granularity is Granularity.SOURCE_IP:
            return int(source) & self._mask
        return siphash24(self._hash_key, source.pack()) % self.slot_count

    def _get(self, slot: int) -> int:
        return (int(self._bits[slot >> 2]) >> ((slot & 3) * 2)) & 0b11

    def _set_fresh(self, slot: int):
        self._bits[slot >> 2] |= _FRESH << ((slot & 3) * 2)

    def admit(self, source: Union[int, FlowKey]):
        self._set_fresh(self.slot_of(source))

    def check(self, source: Union[int, FlowKey]) -> bool:
        """True if the slot is occupied; a hit refreshes it. A miss leaves the slot untouched."""
        self.lookups += 1
        slot = self.slot_of(source)
        if self._get(slot):
            self._set_fresh(slot)
            return True
        return False

    def sweep(self) -> int:
        """Age every slot one step (11 -> 10 -> 00) and return how many were evicted."""
        low = self._bits & _LOW
        high = (self._bits >> 1) & _LOW
        evicted = _popcount(high & ~low & _LOW) + _popcount(low & ~high & _LOW)
        self._bits = (low & high) << 1
        if evicted:
            logger.debug('whitelist sweep evicted %d slots', evicted)
        return evicted

    def occupancy(self) -> int:
        return _popcount((self._bits | (self._bits >> 1)) & _LOW)

    def clear(self):
        self._bits[:] = 0
