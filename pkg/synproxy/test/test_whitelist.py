import unittest

import numpy as np
import pytest

from synproxy.errors import ConfigInvalid
from synproxy.packet import FlowKey
from synproxy.whitelist import Granularity, Whitelist

FLOW = FlowKey.from_strings('192.0.2.10', '10.0.1.1', 40000, 80)


def test_sizes():
    assert Whitelist(mask_bits=20).nbytes == 2 ** 18
    assert Whitelist(mask_bits=2).nbytes == 1
    with pytest.raises(ConfigInvalid):
        Whitelist(mask_bits=1)
    with pytest.raises(ConfigInvalid):
        Whitelist(mask_bits=33)


def test_source_ip_granularity_ignores_ports():
    wl = Whitelist(Granularity.SOURCE_IP, mask_bits=16)
    wl.admit(wl.source_of(FLOW))
    assert wl.check(wl.source_of(FLOW._replace(src_port=1)))
    assert not wl.check(wl.source_of(FLOW._replace(src_ip=FLOW.src_ip + 1)))


def test_flow_granularity():
    wl = Whitelist(Granularity.FLOW, mask_bits=16, hash_key=bytes(range(16)))
    wl.admit(wl.source_of(FLOW))
    assert wl.check(FLOW)
    assert not wl.check(FLOW._replace(src_port=40001))


def test_miss_does_not_consume_a_slot():
    wl = Whitelist(mask_bits=8)
    for ip in range(100):
        assert not wl.check(ip)
    assert wl.occupancy() == 0
    assert wl.lookups == 100


def test_aliasing_on_masked_bits():
    wl = Whitelist(mask_bits=8)
    wl.admit(0x0a000005)
    assert wl.check(0x0b000005)


class SweepTestCase(unittest.TestCase):

    def setUp(self):
        self.wl = Whitelist(mask_bits=10)

    def test_two_sweeps_evict(self):
        self.wl.admit(7)
        self.assertEqual(self.wl.sweep(), 0)
        self.assertTrue(self.wl.check(7))  # refreshed to 11
        self.assertEqual(self.wl.sweep(), 0)
        self.assertEqual(self.wl.sweep(), 1)
        self.assertFalse(self.wl.check(7))

    def test_clear(self):
        for ip in range(0, 1024, 3):
            self.wl.admit(ip)
        self.assertEqual(self.wl.occupancy(), len(range(0, 1024, 3)))
        self.wl.clear()
        self.assertEqual(self.wl.occupancy(), 0)

    def test_retention_schedule(self):
        """Over ten periods, idle entries vanish after two sweeps and touched ones never do."""
        rng = np.random.default_rng(5)
        touched = set(rng.choice(1024, size=50, replace=False).tolist())
        idle = set(rng.choice(sorted(set(range(1024)) - touched), size=50, replace=False).tolist())
        for ip in touched | idle:
            self.wl.admit(ip)
        violations = 0
        for period in range(10):
            for ip in touched:
                violations += not self.wl.check(ip)
            self.wl.sweep()
            if period >= 1:
                violations += sum(self.wl.check(ip) for ip in idle)
        self.assertEqual(violations, 0)
