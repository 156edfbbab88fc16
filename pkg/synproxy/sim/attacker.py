import collections
import ipaddress

import numpy as np
import simpy

from ..packet import FlowKey, Segment, TcpFlags, TcpOptions
from .tcp import MOD32

FLOODS = (
    ('syn_flood_rate', TcpFlags.SYN),
    ('ack_flood_rate', TcpFlags.ACK),
    ('rst_flood_rate', TcpFlags.RST),
)


class AttackerModel:
    """
    Spoofed SYN, ACK and RST floods.

    Every spoofed tuple and sequence number comes from `rng`. Sources are drawn from a finite
    pool of `spoof_ip_count` addresses, so floods of different kinds share sources.
    """

    def __init__(self, env: simpy.Environment, rng: np.random.Generator, cfg, server_ip: int, server_port: int,
                 send, stop_us: int):
        self.env = env
        self.rng = rng
        self.cfg = cfg
        self.server_ip = server_ip
        self.server_port = server_port
        self._send = send
        self.stop_us = stop_us
        self.ip_base = int(ipaddress.IPv4Address(cfg.spoof_ip_base))
        self.counters = collections.Counter()
        for rate_name, flags in FLOODS:
            rate = getattr(cfg, rate_name)
            if rate > 0:
                env.process(self._flood(rate, flags))

    def is_spoofed(self, ip: int) -> bool:
        return self.ip_base <= ip < self.ip_base + self.cfg.spoof_ip_count

    def _segment(self, flags: TcpFlags) -> Segment:
        ip = self.ip_base + int(self.rng.integers(0, self.cfg.spoof_ip_count))
        port = int(self.rng.integers(self.cfg.spoof_port_min, self.cfg.spoof_port_max + 1))
        seq = int(self.rng.integers(0, MOD32))
        ack = int(self.rng.integers(0, MOD32)) if flags & TcpFlags.ACK else 0
        options = TcpOptions(mss=1460) if flags & TcpFlags.SYN else TcpOptions()
        return Segment(key=FlowKey(ip, self.server_ip, port, self.server_port), seq=seq, ack=ack, flags=flags,
                       window=65535 if not flags & TcpFlags.RST else 0, options=options)

    def _flood(self, rate: float, flags: TcpFlags):
        interval = 1e6 / rate
        t = self.cfg.start_s * 1e6
        name = 'sent.' + flags.name.lower()
        while True:
            if self.cfg.arrival == 'poisson':
                t += self.rng.exponential(interval)
            wait = int(t) - self.env.now
            if wait > 0:
                yield self.env.timeout(wait)
            if self.env.now >= self.stop_us:
                return
            self.counters[name] += 1
            self._send(self._segment(flags))
            if self.cfg.arrival != 'poisson':
                t += interval
