"""Sequence arithmetic, timers and payload patterns shared by the simulated hosts."""
import numpy as np
import simpy

MOD32 = 1 << 32


def wire_seq(isn: int, offset: int) -> int:
    """Sequence number of stream byte `offset` (the SYN occupies isn)."""
    return (isn + 1 + offset) % MOD32


def stream_offset(isn: int, seq: int) -> int:
    """Inverse of wire_seq for offsets within 2**31 of the ISN."""
    return (seq - isn - 1) % MOD32


def pattern(salt: int, offset: int, n: int) -> bytes:
    """Deterministic application bytes for stream position `offset`."""
    idx = np.arange(offset, offset + n, dtype=np.int64)
    return ((idx * 31 + salt) % 251).astype(np.uint8).tobytes()


class Timer:
    """Restartable one-shot timer; only the most recent `arm` fires."""

    def __init__(self, env: simpy.Environment, callback):
        self.env = env
        self.callback = callback
        self.armed = False
        self._generation = 0

    def arm(self, delay_us: int):
        self._generation += 1
        generation = self._generation
        self.armed = True
        self.env.timeout(max(0, int(delay_us))).callbacks.append(lambda _event: self._fire(generation))

    def cancel(self):
        self._generation += 1
        self.armed = False

    def _fire(self, generation: int):
        if generation == self._generation:
            self.armed = False
            self.callback()


def later(env: simpy.Environment, delay_us: int, fn, *args):
    """Run fn(*args) after delay_us."""
    env.timeout(max(0, int(delay_us))).callbacks.append(lambda _event: fn(*args))
