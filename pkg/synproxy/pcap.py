"""Classic pcap trace files (microsecond timestamps, Ethernet link type).

Header layouts come from dpkt; records are kept as integer microseconds so a write/read
cycle reproduces them exactly.
"""
import logging
import struct
from typing import Iterable, Iterator, List, NamedTuple

import dpkt

from .errors import TruncatedFile, UnsupportedCapture

logger = logging.getLogger(__name__)

DEFAULT_SNAPLEN = 65535

_MAGIC_LE = struct.pack('<I', dpkt.pcap.TCPDUMP_MAGIC)
_MAGIC_BE = struct.pack('>I', dpkt.pcap.TCPDUMP_MAGIC)
_NANO_MAGICS = (struct.pack('<I', dpkt.pcap.TCPDUMP_MAGIC_NANO), struct.pack('>I', dpkt.pcap.TCPDUMP_MAGIC_NANO))


class PcapRecord(NamedTuple):
    ts_us: int
    frame: bytes

    @property
    def timestamp(self) -> float:
        return self.ts_us / 1e6


def _header_classes(magic: bytes):
    if magic == _MAGIC_LE:
        return dpkt.pcap.LEFileHdr, dpkt.pcap.LEPktHdr
    if magic == _MAGIC_BE:
        return dpkt.pcap.FileHdr, dpkt.pcap.PktHdr
    if magic in _NANO_MAGICS:
        raise UnsupportedCapture('nanosecond pcap files are not supported')
    raise UnsupportedCapture('not a classic pcap file (magic {})'.format(magic.hex()))


def iter_pcap(path) -> Iterator[PcapRecord]:
    """
    Stream the records of a pcap file.

    Parameters
    ----------
    path: str or os.PathLike

    Raises
    ------
    UnsupportedCapture
        unknown magic, nanosecond timestamps or a link type other than Ethernet
    TruncatedFile
        the file ends inside a header or a frame

    """
    with open(path, 'rb') as f:
        head = f.read(dpkt.pcap.FileHdr.__hdr_len__)
        if len(head) < 4:
            raise TruncatedFile('{}: no pcap header'.format(path))
        file_hdr_cls, pkt_hdr_cls = _header_classes(head[:4])
        if len(head) < file_hdr_cls.__hdr_len__:
            raise TruncatedFile('{}: short pcap header'.format(path))
        file_hdr = file_hdr_cls(head)
        if file_hdr.linktype != dpkt.pcap.DLT_EN10MB:
            raise UnsupportedCapture('link type {} is not Ethernet'.format(file_hdr.linktype))

        n = 0
        while True:
            raw = f.read(pkt_hdr_cls.__hdr_len__)
            if not raw:
                break
            if len(raw) < pkt_hdr_cls.__hdr_len__:
                raise TruncatedFile('{}: record {} has a short header'.format(path, n))
            hdr = pkt_hdr_cls(raw)
            frame = f.read(hdr.caplen)
            if len(frame) < hdr.caplen:
                raise TruncatedFile('{}: record {} is cut at {} of {} bytes'.format(path, n, len(frame), hdr.caplen))
            n += 1
            yield PcapRecord(hdr.tv_sec * 1_000_000 + hdr.tv_usec, frame)
        logger.debug('read %d records from %s', n, path)


def read_pcap(path) -> List[PcapRecord]:
    return list(iter_pcap(path))


def write_pcap(path, records: Iterable, snaplen: int = DEFAULT_SNAPLEN) -> int:
    """Write (ts_us, frame) records little-endian; returns the number written."""
    n = 0
    with open(path, 'wb') as f:
        f.write(bytes(dpkt.pcap.LEFileHdr(snaplen=snaplen, linktype=dpkt.pcap.DLT_EN10MB)))
        for ts_us, frame in records:
            ts_us = int(ts_us)
            hdr = dpkt.pcap.LEPktHdr(tv_sec=ts_us // 1_000_000, tv_usec=ts_us % 1_000_000,
                                     caplen=len(frame), len=len(frame))
            f.write(bytes(hdr))
            f.write(frame)
            n += 1
    logger.debug('wrote %d records to %s', n, path)
    return n
