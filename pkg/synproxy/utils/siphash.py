"""SipHash-2-4.

`siphash24_reference` is the plain Python algorithm. `siphash24` uses the
`siphashc` C extension when it is installed and falls back to the reference
otherwise; both return the 64-bit hash as an int.
"""
import struct

try:
    import siphashc
except ImportError:  # pragma: no cover - optional dependency
    siphashc = None

MASK64 = (1 << 64) - 1


def rotl64(n, b):
    return ((n << b) | (n >> (64 - b))) & MASK64


def sipround(v0, v1, v2, v3):
    v0 = (v0 + v1) & MASK64
    v1 = rotl64(v1, 13) ^ v0
    v0 = rotl64(v0, 32)
    v2 = (v2 + v3) & MASK64
    v3 = rotl64(v3, 16) ^ v2
    v0 = (v0 + v3) & MASK64
    v3 = rotl64(v3, 21) ^ v0
    v2 = (v2 + v1) & MASK64
    v1 = rotl64(v1, 17) ^ v2
    v2 = rotl64(v2, 32)
    return v0, v1, v2, v3


def siphash24_reference(key: bytes, data: bytes) -> int:
    """

    Parameters
    ----------
    key: bytes
        16 byte secret
    data: bytes

    Returns
    -------
    int
        64-bit hash value

    """
    if len(key) != 16:
        raise ValueError('SipHash key must be 16 bytes, got {}'.format(len(key)))
    k0, k1 = struct.unpack('<QQ', key)
    v0 = 0x736f6d6570736575 ^ k0
    v1 = 0x646f72616e646f6d ^ k1
    v2 = 0x6c7967656e657261 ^ k0
    v3 = 0x7465646279746573 ^ k1

    n_full = len(data) // 8
    for (m,) in struct.iter_unpack('<Q', data[:n_full * 8]):
        v3 ^= m
        v0, v1, v2, v3 = sipround(v0, v1, v2, v3)
        v0, v1, v2, v3 = sipround(v0, v1, v2, v3)
        v0 ^= m

    tail = data[n_full * 8:]
    m = ((len(data) & 0xff) << 56) | int.from_bytes(tail, 'little')
    v3 ^= m
    v0, v1, v2, v3 = sipround(v0, v1, v2, v3)
    v0, v1, v2, v3 = sipround(v0, v1, v2, v3)
    v0 ^= m

    v2 ^= 0xff
    for _ in range(4):
        v0, v1, v2, v3 = sipround(v0, v1, v2, v3)
    return v0 ^ v1 ^ v2 ^ v3


if siphashc is not None:
    def siphash24(key: bytes, data: bytes) -> int:
        return siphashc.siphash(key, data)
else:
    siphash24 = siphash24_reference
