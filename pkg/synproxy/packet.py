"""Ethernet II / IPv4 / TCP segments.

Frames are parsed into immutable `Segment` values and serialised back bit-exactly. Checksums are
recomputed on every serialisation; the values found while parsing are recorded on the segment
(outside of equality) and only checked on request.
"""
import enum
import ipaddress
import struct
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import MalformedFrame, OversizeSegment

ETH_HLEN = 14
ETHERTYPE_IPV4 = 0x0800
IPPROTO_TCP = 6
MIN_FRAME_LEN = ETH_HLEN + 20 + 20
DEFAULT_MTU = 1514
DEFAULT_TTL = 64
ZERO_MAC = bytes(6)

OPT_EOL = 0
OPT_NOP = 1
OPT_MSS = 2
OPT_WSCALE = 3
OPT_SACK_PERM = 4
OPT_TIMESTAMP = 8
MAX_OPTIONS_LEN = 40

_ETH = struct.Struct('!6s6sH')
_IPV4 = struct.Struct('!BBHHHBBHII')
_TCP = struct.Struct('!HHIIBBHHH')
_PSEUDO = struct.Struct('!IIBBH')

_IP_DF = 0x4000
_IP_FRAG_MASK = 0x3fff  # MF bit and fragment offset


class TcpFlags(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20
    ECE = 0x40
    CWR = 0x80


NO_FLAGS = TcpFlags(0)


class FlowKey(NamedTuple):
    """TCP 4-tuple in packet direction. Addresses are ints, ports are ints."""
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int

    def reverse(self) -> 'FlowKey':
        return FlowKey(self.dst_ip, self.src_ip, self.dst_port, self.src_port)

    @classmethod
    def from_strings(cls, src: str, dst: str, src_port: int, dst_port: int) -> 'FlowKey':
        return cls(int(ipaddress.IPv4Address(src)), int(ipaddress.IPv4Address(dst)),
                   int(src_port), int(dst_port))

    def pack(self) -> bytes:
        return struct.pack('!IIHH', self.src_ip, self.dst_ip, self.src_port, self.dst_port)

    def __str__(self):
        return '{}:{} -> {}:{}'.format(ipaddress.IPv4Address(self.src_ip), self.src_port,
                                       ipaddress.IPv4Address(self.dst_ip), self.dst_port)


def flow_key(s: 'Segment') -> FlowKey:
    return s.key


def reverse(k: FlowKey) -> FlowKey:
    return k.reverse()


def mac_from_string(mac: str) -> bytes:
    parts = mac.split(':')
    if len(parts) != 6:
        raise ValueError('not a MAC address: {}'.format(mac))
    return bytes(int(p, 16) for p in parts)


def mac_to_string(mac: bytes) -> str:
    return ':'.join('{:02x}'.format(b) for b in mac)


@dataclass(frozen=True)
class TcpOptions:
    """Parsed TCP options.

    Only MSS, SACK-permitted, window scale and timestamps are interpreted, everything else is kept
    in `raw_unparsed`. `wire` remembers the exact bytes the options were parsed from; as long as no
    field differs from what those bytes decode to, `encode` returns them unchanged.
    """
    mss: Optional[int] = None
    sack_permitted: bool = False
    window_scale: Optional[int] = None
    timestamp: Optional[Tuple[int, int]] = None
    raw_unparsed: bytes = b''
    wire: Optional[bytes] = field(default=None, compare=False, repr=False)

    @classmethod
    def decode(cls, data: bytes) -> 'TcpOptions':
        found = {}
        unparsed = bytearray()
        i = 0
        n = len(data)
        while i < n:
            kind = data[i]
            if kind == OPT_EOL:
                break
            if kind == OPT_NOP:
                i += 1
                continue
            if i + 1 >= n:
                raise MalformedFrame('truncated TCP option of kind {}'.format(kind))
            length = data[i + 1]
            if length < 2 or i + length > n:
                raise MalformedFrame('bad TCP option length {} for kind {}'.format(length, kind))
            body = data[i + 2:i + length]
            if kind == OPT_MSS and length == 4 and 'mss' not in found:
                found['mss'] = struct.unpack('!H', body)[0]
            elif kind == OPT_WSCALE and length == 3 and 'window_scale' not in found:
                found['window_scale'] = body[0]
            elif kind == OPT_SACK_PERM and length == 2 and 'sack_permitted' not in found:
                found['sack_permitted'] = True
            elif kind == OPT_TIMESTAMP and length == 10 and 'timestamp' not in found:
                found['timestamp'] = struct.unpack('!II', body)
            else:
                unparsed += data[i:i + length]
            i += length
        return cls(raw_unparsed=bytes(unparsed), wire=bytes(data), **found)

    def encode(self) -> bytes:
        if self.wire is not None and TcpOptions.decode(self.wire) == self:
            return self.wire
        out = bytearray()
        if self.mss is not None:
            out += struct.pack('!BBH', OPT_MSS, 4, self.mss)
        if self.sack_permitted:
            out += bytes((OPT_SACK_PERM, 2))
        if self.timestamp is not None:
            out += struct.pack('!BBII', OPT_TIMESTAMP, 10, *self.timestamp)
        if self.window_scale is not None:
            out += struct.pack('!BBBB', OPT_NOP, OPT_WSCALE, 3, self.window_scale)
        out += self.raw_unparsed
        if len(out) % 4:
            out += bytes(4 - len(out) % 4)
        if len(out) > MAX_OPTIONS_LEN:
            raise OversizeSegment('TCP options take {} bytes, at most {} fit'.format(len(out), MAX_OPTIONS_LEN))
        return bytes(out)


NO_OPTIONS = TcpOptions()


@dataclass(frozen=True)
class Segment:
    key: FlowKey
    seq: int = 0
    ack: int = 0
    flags: TcpFlags = NO_FLAGS
    window: int = 65535
    options: TcpOptions = NO_OPTIONS
    payload: bytes = b''
    eth_src: bytes = ZERO_MAC
    eth_dst: bytes = ZERO_MAC
    ttl: int = DEFAULT_TTL
    ip_id: int = 0
    tos: int = 0
    dont_fragment: bool = False
    urgent: int = 0
    ip_options: bytes = b''
    ip_checksum: Optional[int] = field(default=None, compare=False, repr=False)
    tcp_checksum: Optional[int] = field(default=None, compare=False, repr=False)

    def has(self, flags: TcpFlags) -> bool:
        return (self.flags & flags) == flags

    @property
    def seq_len(self) -> int:
        """Sequence space consumed: payload plus one for each of SYN and FIN."""
        return len(self.payload) + bool(self.flags & TcpFlags.SYN) + bool(self.flags & TcpFlags.FIN)

    def serialized_len(self) -> int:
        return ETH_HLEN + 20 + len(self.ip_options) + 20 + len(self.options.encode()) + len(self.payload)


def internet_checksum(data: bytes) -> int:
    """One's complement Internet checksum; odd lengths are padded with a zero byte."""
    if len(data) % 2:
        data = data + b'\x00'
    total = int(np.frombuffer(data, dtype='>u2').sum(dtype=np.uint64))
    while total >> 16:
        total = (total & 0xffff) + (total >> 16)
    return ~total & 0xffff


def tcp_checksum(src_ip: int, dst_ip: int, tcp: bytes) -> int:
    return internet_checksum(_PSEUDO.pack(src_ip, dst_ip, 0, IPPROTO_TCP, len(tcp)) + tcp)


def parse_segment(frame: bytes) -> Segment:
    """
    Parse an Ethernet II frame carrying IPv4/TCP.

    Parameters
    ----------
    frame: bytes

    Returns
    -------
    Segment

    Raises
    ------
    MalformedFrame
        too short, not IPv4, not TCP, a fragment, or inconsistent length fields

    """
    if len(frame) < MIN_FRAME_LEN:
        raise MalformedFrame('frame too short: {} bytes'.format(len(frame)))
    eth_dst, eth_src, ethertype = _ETH.unpack_from(frame, 0)
    if ethertype != ETHERTYPE_IPV4:
        raise MalformedFrame('not IPv4: ethertype 0x{:04x}'.format(ethertype))

    ver_ihl, tos, total_len, ip_id, frag, ttl, proto, ip_csum, src, dst = _IPV4.unpack_from(frame, ETH_HLEN)
    if ver_ihl >> 4 != 4:
        raise MalformedFrame('IP version {}'.format(ver_ihl >> 4))
    ihl = (ver_ihl & 0x0f) * 4
    if ihl < 20:
        raise MalformedFrame('IPv4 header length {}'.format(ihl))
    if total_len < ihl + 20 or ETH_HLEN + total_len > len(frame):
        raise MalformedFrame('IPv4 total length {} inconsistent with a {} byte frame'.format(total_len, len(frame)))
    if frag & _IP_FRAG_MASK:
        raise MalformedFrame('IPv4 fragments are not supported')
    if proto != IPPROTO_TCP:
        raise MalformedFrame('IP protocol {} is not TCP'.format(proto))

    tcp_start = ETH_HLEN + ihl
    ip_end = ETH_HLEN + total_len
    sport, dport, seq, ack, offset, flags, window, tcp_csum, urgent = _TCP.unpack_from(frame, tcp_start)
    doff = (offset >> 4) * 4
    if doff < 20 or tcp_start + doff > ip_end:
        raise MalformedFrame('TCP data offset {} inconsistent with IPv4 payload'.format(doff))

    return Segment(
        key=FlowKey(src, dst, sport, dport),
        seq=seq,
        ack=ack,
        flags=TcpFlags(flags),
        window=window,
        options=TcpOptions.decode(frame[tcp_start + 20:tcp_start + doff]),
        payload=bytes(frame[tcp_start + doff:ip_end]),
        eth_src=eth_src,
        eth_dst=eth_dst,
        ttl=ttl,
        ip_id=ip_id,
        tos=tos,
        dont_fragment=bool(frag & _IP_DF),
        urgent=urgent,
        ip_options=bytes(frame[ETH_HLEN + 20:tcp_start]),
        ip_checksum=ip_csum,
        tcp_checksum=tcp_csum,
    )


def serialize_segment(s: Segment, mtu: int = DEFAULT_MTU) -> bytes:
    """
    Build the frame for a segment with freshly computed IPv4 and TCP checksums.

    Raises
    ------
    OversizeSegment
        if the frame would be longer than `mtu` bytes

    """
    opts = s.options.encode()
    if len(s.ip_options) % 4 or len(s.ip_options) > 40:
        raise MalformedFrame('IPv4 options must be a multiple of 4 bytes up to 40, got {}'.format(len(s.ip_options)))
    ihl = 20 + len(s.ip_options)
    tcp_len = 20 + len(opts)
    total_len = ihl + tcp_len + len(s.payload)
    if ETH_HLEN + total_len > mtu:
        raise OversizeSegment('frame of {} bytes exceeds MTU {}'.format(ETH_HLEN + total_len, mtu))

    k = s.key
    try:
        tcp = bytearray(_TCP.pack(k.src_port, k.dst_port, s.seq, s.ack, (tcp_len // 4) << 4, int(s.flags),
                                  s.window, 0, s.urgent))
        tcp += opts
        tcp += s.payload
        struct.pack_into('!H', tcp, 16, tcp_checksum(k.src_ip, k.dst_ip, bytes(tcp)))

        ip = bytearray(_IPV4.pack(0x40 | (ihl // 4), s.tos, total_len, s.ip_id, _IP_DF if s.dont_fragment else 0,
                                  s.ttl, IPPROTO_TCP, 0, k.src_ip, k.dst_ip))
        ip += s.ip_options
        struct.pack_into('!H', ip, 10, internet_checksum(bytes(ip)))
        eth = _ETH.pack(s.eth_dst, s.eth_src, ETHERTYPE_IPV4)
    except struct.error as exc:
        raise ValueError('segment field out of range: {}'.format(exc)) from exc
    return eth + bytes(ip) + bytes(tcp)


def verify_checksums(frame: bytes) -> bool:
    """True when both the IPv4 header and the TCP checksum of a raw frame fold to zero."""
    s = parse_segment(frame)
    ihl = 20 + len(s.ip_options)
    total_len = struct.unpack_from('!H', frame, ETH_HLEN + 2)[0]
    ip_ok = internet_checksum(frame[ETH_HLEN:ETH_HLEN + ihl]) == 0
    tcp = frame[ETH_HLEN + ihl:ETH_HLEN + total_len]
    tcp_ok = internet_checksum(_PSEUDO.pack(s.key.src_ip, s.key.dst_ip, 0, IPPROTO_TCP, len(tcp)) + tcp) == 0
    return ip_ok and tcp_ok


def checksums_valid(s: Segment) -> bool:
    """Compare the checksums recorded at parse time with the ones the fields produce."""
    if s.ip_checksum is None and s.tcp_checksum is None:
        return True
    frame = serialize_segment(s, mtu=1 << 16)
    ihl = 20 + len(s.ip_options)
    ip_csum = struct.unpack_from('!H', frame, ETH_HLEN + 10)[0]
    tcp_csum = struct.unpack_from('!H', frame, ETH_HLEN + ihl + 16)[0]
    return ip_csum == s.ip_checksum and tcp_csum == s.tcp_checksum


def without_checksums(s: Segment) -> Segment:
    if s.ip_checksum is None and s.tcp_checksum is None:
        return s
    return replace(s, ip_checksum=None, tcp_checksum=None)
