import unittest

from synproxy.conn_state import (ConnEntry, Direction, SpliceState, SwapMaps, seq_after, track_teardown)
from synproxy.errors import CapacityExceeded
from synproxy.packet import FlowKey, Segment, TcpFlags

K = FlowKey.from_strings('10.0.0.1', '10.0.1.1', 40000, 80)


def key(i):
    return K._replace(src_port=1024 + i)


def test_seq_after_wraps():
    assert seq_after(1, 0)
    assert seq_after(5, 0xfffffff0)
    assert not seq_after(0xfffffff0, 5)
    assert not seq_after(7, 7)


def test_pack_fits_in_38_bits():
    e = ConnEntry(delta=0xffffffff, splice_state=SpliceState.ESTABLISHED, fin_client_seen=True,
                  fin_client_acked=True, fin_server_seen=True, fin_server_acked=True, rst_seen=True)
    assert e.pack() < 1 << 38
    assert ConnEntry(delta=5).pack() == 5


class SwapMapsTestCase(unittest.TestCase):

    def setUp(self):
        self.maps = SwapMaps(capacity=4)

    def test_lookup_copies_up(self):
        self.maps.insert(key(0), ConnEntry(delta=1))
        self.maps.swap()
        self.assertIn(key(0), self.maps.history)
        self.assertEqual(self.maps.lookup(key(0)), ConnEntry(delta=1))
        self.assertIn(key(0), self.maps.active)
        self.assertNotIn(key(0), self.maps.history)

    def test_peek_does_not_copy_up(self):
        self.maps.insert(key(0), ConnEntry(delta=1))
        self.maps.swap()
        self.assertIsNotNone(self.maps.peek(key(0)))
        self.assertNotIn(key(0), self.maps.active)

    def test_idle_entry_gone_after_two_swaps(self):
        self.maps.insert(key(0), ConnEntry(delta=1))
        self.assertEqual(self.maps.swap(), 0)
        self.assertEqual(self.maps.swap(), 1)
        self.assertIsNone(self.maps.lookup(key(0)))
        self.assertEqual(len(self.maps), 0)

    def test_insert_replaces_history_entry(self):
        self.maps.insert(key(0), ConnEntry(delta=1))
        self.maps.swap()
        self.maps.insert(key(0), ConnEntry(delta=2))
        self.assertEqual(len(self.maps), 1)
        self.assertEqual(self.maps.lookup(key(0)).delta, 2)

    def test_capacity(self):
        for i in range(4):
            self.maps.insert(key(i), ConnEntry(delta=i))
        with self.assertRaises(CapacityExceeded):
            self.maps.insert(key(9), ConnEntry(delta=9))
        self.maps.insert(key(0), ConnEntry(delta=7))  # updates still fit
        self.assertEqual(self.maps.high_water, 4)

    def test_remove(self):
        self.maps.insert(key(0), ConnEntry(delta=1))
        self.assertTrue(self.maps.remove(key(0)))
        self.assertFalse(self.maps.remove(key(0)))
        self.assertNotIn(key(0), self.maps)


def test_retention_schedule():
    maps = SwapMaps()
    live = [key(i) for i in range(20)]
    idle = [key(100 + i) for i in range(20)]
    for k in live + idle:
        maps.insert(k, ConnEntry(delta=0))
    violations = 0
    for period in range(10):
        for k in live:
            violations += maps.lookup(k) is None
        maps.swap()
        if period >= 1:
            violations += sum(k in maps for k in idle)
    assert violations == 0


class TeardownTestCase(unittest.TestCase):

    def setUp(self):
        self.e = ConnEntry(delta=100, splice_state=SpliceState.ESTABLISHED)

    def seg(self, flags, seq=0, ack=0, payload=b'', from_client=True):
        return Segment(key=K if from_client else K.reverse(), seq=seq, ack=ack, flags=flags, payload=payload)

    def test_rst_terminates(self):
        e, done = track_teardown(self.e, self.seg(TcpFlags.RST), Direction.SERVER_TO_CLIENT)
        self.assertTrue(done)
        self.assertTrue(e.rst_seen)

    def test_full_close(self):
        fa = TcpFlags.FIN | TcpFlags.ACK
        e, done = track_teardown(self.e, self.seg(fa, seq=1000, payload=b'bye'), Direction.CLIENT_TO_SERVER)
        self.assertFalse(done)
        self.assertEqual(e.fin_client_seq, 1003)
        e, done = track_teardown(e, self.seg(fa, seq=5000, ack=1004, from_client=False), Direction.SERVER_TO_CLIENT)
        self.assertFalse(done)
        self.assertTrue(e.fin_client_acked and e.fin_server_seen)
        e, done = track_teardown(e, self.seg(TcpFlags.ACK, seq=1004, ack=5001), Direction.CLIENT_TO_SERVER)
        self.assertTrue(done)

    def test_ack_of_data_before_fin_does_not_count(self):
        e, _ = track_teardown(self.e, self.seg(TcpFlags.FIN | TcpFlags.ACK, seq=1000), Direction.CLIENT_TO_SERVER)
        e, _ = track_teardown(e, self.seg(TcpFlags.ACK, ack=1000, from_client=False), Direction.SERVER_TO_CLIENT)
        self.assertFalse(e.fin_client_acked)

    def test_untouched_entry_identity(self):
        e, done = track_teardown(self.e, self.seg(TcpFlags.ACK, ack=3), Direction.CLIENT_TO_SERVER)
        self.assertIs(e, self.e)
        self.assertFalse(done)
