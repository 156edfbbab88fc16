import struct
import unittest

import numpy as np
import pytest

from synproxy.errors import MalformedFrame, OversizeSegment
from synproxy.packet import (FlowKey, Segment, TcpFlags, TcpOptions, checksums_valid, internet_checksum,
                             mac_from_string, mac_to_string, parse_segment, serialize_segment, verify_checksums,
                             without_checksums, ETH_HLEN)

KEY = FlowKey.from_strings('10.0.0.1', '10.0.1.1', 40000, 80)


def make_segment(**kwargs):
    fields = dict(key=KEY, seq=1000, ack=0, flags=TcpFlags.SYN, window=29200,
                  options=TcpOptions(mss=1460, sack_permitted=True, window_scale=7, timestamp=(1, 0)),
                  eth_src=mac_from_string('02:00:00:00:00:01'), eth_dst=mac_from_string('02:00:00:00:01:01'))
    fields.update(kwargs)
    return Segment(**fields)


def test_flow_key_reverse():
    assert KEY.reverse() == FlowKey(KEY.dst_ip, KEY.src_ip, 80, 40000)
    assert KEY.reverse().reverse() == KEY
    assert str(KEY) == '10.0.0.1:40000 -> 10.0.1.1:80'


def test_mac_strings():
    assert mac_to_string(mac_from_string('02:00:00:00:0a:ff')) == '02:00:00:00:0a:ff'
    with pytest.raises(ValueError):
        mac_from_string('02:00:00')


def test_internet_checksum_folds_to_zero():
    data = bytes(range(1, 40))
    csum = internet_checksum(data)
    # appending the checksum at an even offset makes the sum fold to zero
    padded = data + b'\x00'
    assert internet_checksum(padded + struct.pack('!H', csum)) == 0


def test_parse_serialize_identity():
    s = make_segment(payload=b'GET / HTTP/1.1\r\n', flags=TcpFlags.ACK | TcpFlags.PSH, ip_id=4321,
                     dont_fragment=True, tos=0x10)
    frame = serialize_segment(s)
    parsed = parse_segment(frame)
    assert parsed == s
    assert serialize_segment(parsed) == frame
    assert verify_checksums(frame)
    assert checksums_valid(parsed)


def test_unknown_options_survive():
    raw = bytes((2, 4, 5, 0xb4, 1, 1, 30, 4, 0xab, 0xcd))  # MSS, NOP, NOP, unknown kind 30
    raw += bytes(4 - len(raw) % 4)
    opts = TcpOptions.decode(raw)
    assert opts.mss == 1460
    assert opts.raw_unparsed == bytes((30, 4, 0xab, 0xcd))
    assert opts.encode() == raw


def test_canonical_option_order():
    opts = TcpOptions(mss=536, window_scale=2)
    encoded = opts.encode()
    assert len(encoded) % 4 == 0
    assert TcpOptions.decode(encoded) == opts


def test_options_too_long():
    with pytest.raises(OversizeSegment):
        TcpOptions(mss=1460, raw_unparsed=bytes((30, 40)) + bytes(38)).encode()


def test_oversize_segment():
    s = make_segment(payload=bytes(1500), flags=TcpFlags.ACK)
    with pytest.raises(OversizeSegment):
        serialize_segment(s)
    assert len(serialize_segment(s, mtu=9000)) == s.serialized_len()


def test_seq_len():
    assert make_segment().seq_len == 1
    assert make_segment(flags=TcpFlags.FIN | TcpFlags.ACK, payload=b'abc').seq_len == 4
    assert make_segment(flags=TcpFlags.ACK).seq_len == 0


class ParseErrorsTestCase(unittest.TestCase):

    def setUp(self):
        self.frame = bytearray(serialize_segment(make_segment()))

    def test_short(self):
        with self.assertRaises(MalformedFrame):
            parse_segment(bytes(self.frame[:40]))

    def test_not_ipv4(self):
        self.frame[12:14] = b'\x86\xdd'
        with self.assertRaises(MalformedFrame):
            parse_segment(bytes(self.frame))

    def test_not_tcp(self):
        self.frame[ETH_HLEN + 9] = 17
        with self.assertRaises(MalformedFrame):
            parse_segment(bytes(self.frame))

    def test_fragment(self):
        self.frame[ETH_HLEN + 6] |= 0x20  # MF
        with self.assertRaises(MalformedFrame):
            parse_segment(bytes(self.frame))

    def test_bad_total_length(self):
        struct.pack_into('!H', self.frame, ETH_HLEN + 2, 2000)
        with self.assertRaises(MalformedFrame):
            parse_segment(bytes(self.frame))

    def test_bad_option_length(self):
        tcp = ETH_HLEN + 20
        self.frame[tcp + 21] = 0  # length byte of the first option
        with self.assertRaises(MalformedFrame):
            parse_segment(bytes(self.frame))

    def test_trailing_padding_is_ignored(self):
        s = parse_segment(bytes(self.frame) + bytes(6))
        self.assertEqual(s, make_segment())


def test_corrupted_checksum_detected():
    frame = bytearray(serialize_segment(make_segment(payload=b'x', flags=TcpFlags.ACK)))
    frame[-1] ^= 0xff
    assert not verify_checksums(bytes(frame))
    s = parse_segment(bytes(frame))
    assert not checksums_valid(s)
    assert checksums_valid(without_checksums(s))


def test_field_out_of_range():
    with pytest.raises(ValueError):
        serialize_segment(make_segment(seq=1 << 32))


def test_scapy_agrees():
    scapy_all = pytest.importorskip('scapy.all')
    s = make_segment(payload=b'hello', flags=TcpFlags.ACK | TcpFlags.PSH, ack=77)
    pkt = scapy_all.Ether(serialize_segment(s))
    assert pkt[scapy_all.TCP].seq == 1000
    assert pkt[scapy_all.TCP].ack == 77
    assert bytes(pkt[scapy_all.TCP].payload) == b'hello'
    rebuilt = scapy_all.Ether(bytes(pkt))
    del rebuilt[scapy_all.IP].chksum
    del rebuilt[scapy_all.TCP].chksum
    np.testing.assert_array_equal(np.frombuffer(bytes(rebuilt), np.uint8),
                                  np.frombuffer(serialize_segment(s), np.uint8))
