import collections
import logging
from typing import Callable, Optional

import simpy

from ..engine import ActionList, Emit, Interface, ShardedEngine
from ..packet import Segment
from .links import Link

logger = logging.getLogger(__name__)

DEFAULT_POLL_INTERVAL_US = 50_000


class EngineCapacityModel:
    """
    Token bucket limiting how many segments per second the proxy processes.

    Parameters
    ----------
    ops_per_second: float
        refill rate; 0 means unlimited
    depth: int
        bucket size, one batch
    """

    def __init__(self, ops_per_second: float, depth: int):
        self.rate = float(ops_per_second)
        self.depth = float(depth)
        self.tokens = float(depth)
        self._last_us = 0

    @property
    def unlimited(self) -> bool:
        return self.rate <= 0

    def admit(self, now_us: int) -> bool:
        if self.unlimited:
            return True
        self.tokens = min(self.depth, self.tokens + (now_us - self._last_us) * self.rate / 1e6)
        self._last_us = now_us
        if self.tokens >= 1.0:
            self.tokens -= 1.0
            return True
        return False


class ProxyNode:
    """
    The middle box: runs the engine on every admitted segment, or plain routing without one.

    `is_attack` classifies inbound client-side segments for the processed-flood metric.
    """

    def __init__(self, env: simpy.Environment, engine: Optional[ShardedEngine], capacity: EngineCapacityModel,
                 to_client: Link, to_server: Link, deliver_client: Callable, deliver_server: Callable,
                 is_attack: Callable[[Segment], bool], poll_interval_us: int = DEFAULT_POLL_INTERVAL_US):
        self.env = env
        self.engine = engine
        self.capacity = capacity
        self.to_client = to_client
        self.to_server = to_server
        self.deliver_client = deliver_client
        self.deliver_server = deliver_server
        self.is_attack = is_attack
        self.counters = collections.Counter()
        if engine is not None:
            env.process(self._housekeeping(poll_interval_us))

    def from_client(self, s: Segment):
        self._ingress(s, Interface.CLIENT_SIDE)

    def from_server(self, s: Segment):
        self._ingress(s, Interface.SERVER_SIDE)

    def _ingress(self, s: Segment, ingress: Interface):
        attack = ingress is Interface.CLIENT_SIDE and self.is_attack(s)
        if not self.capacity.admit(self.env.now):
            self.counters['overload_drops'] += 1
            if attack:
                self.counters['attack_overload_drops'] += 1
            return
        self.counters['processed'] += 1
        if attack:
            self.counters['attack_processed'] += 1
        if self.engine is None:
            self._forward(s, Interface.SERVER_SIDE if ingress is Interface.CLIENT_SIDE else Interface.CLIENT_SIDE)
            return
        self._apply(self.engine.process(s, self.env.now / 1e6, ingress))

    def _forward(self, s: Segment, egress: Interface):
        if egress is Interface.SERVER_SIDE:
            self.to_server.transit(s, self.deliver_server)
        else:
            self.to_client.transit(s, self.deliver_client)

    def _apply(self, actions: ActionList):
        for action in actions:
            if isinstance(action, Emit):
                self._forward(action.segment, action.interface)

    def _housekeeping(self, interval_us: int):
        while True:
            yield self.env.timeout(interval_us)
            self._apply(self.engine.poll(self.env.now / 1e6))
