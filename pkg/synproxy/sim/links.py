import collections

import numpy as np
import simpy

from ..packet import Segment


class Link:
    """
    One direction of a point-to-point link.

    Parameters
    ----------
    env: simpy.Environment
    rng: numpy.random.Generator
    delay_us: int
        propagation delay
    jitter_us: int
        each delivery is shifted by a uniform integer in [-jitter_us, jitter_us]
    loss: float
        independent drop probability per segment
    """

    def __init__(self, env: simpy.Environment, rng: np.random.Generator, delay_us: int, jitter_us: int = 0,
                 loss: float = 0.0, name: str = ''):
        self.env = env
        self.rng = rng
        self.delay_us = int(delay_us)
        self.jitter_us = int(jitter_us)
        self.loss = float(loss)
        self.name = name
        self.counters = collections.Counter()

    def transit(self, s: Segment, deliver):
        """Schedule delivery of `s` to `deliver`; returns the delivery event, or None if the segment is lost."""
        self.counters['sent'] += 1
        if self.loss > 0.0 and self.rng.random() < self.loss:
            self.counters['lost'] += 1
            return None
        delay = self.delay_us
        if self.jitter_us:
            delay += int(self.rng.integers(-self.jitter_us, self.jitter_us + 1))
        event = self.env.timeout(max(0, delay), value=s)
        event.callbacks.append(self._on_arrival(deliver))
        return event

    def _on_arrival(self, deliver):
        def arrive(event):
            self.counters['delivered'] += 1
            deliver(event.value)
        return arrive
