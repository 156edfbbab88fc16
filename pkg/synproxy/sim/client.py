"""Load-generating client fleet: connections, fixed-size requests, retransmissions and app-level retry."""
import collections
import logging
from typing import Deque, Dict, List, Optional

import numpy as np
import simpy

from ..packet import FlowKey, Segment, TcpFlags, TcpOptions
from .tcp import MOD32, Timer, pattern, stream_offset, wire_seq

logger = logging.getLogger(__name__)

SYN = TcpFlags.SYN
ACK = TcpFlags.ACK
FIN = TcpFlags.FIN
RST = TcpFlags.RST

PORT_MIN = 10000
PORT_MAX = 60999
MAX_RTO_US = 3_000_000
FIN_RETRIES = 3


class Request:
    __slots__ = ('t_issue', 'deadline', 't_done')

    def __init__(self, t_issue: int, deadline: int):
        self.t_issue = t_issue
        self.deadline = deadline
        self.t_done = None

    @property
    def succeeded(self) -> bool:
        return self.t_done is not None and self.t_done <= self.deadline


class ClientConnection:
    """
    One client TCP connection. `t_open` is the time of the first SYN of the logical connection,
    carried over when the connection is reopened after a reset.
    """

    def __init__(self, fleet: 'ClientModel', slot: int, key: FlowKey, t_open: int):
        self.fleet = fleet
        self.slot = slot
        self.key = key
        self.t_open = t_open
        self.isn = int(fleet.rng.integers(0, MOD32))
        self.irs = None
        self.state = 'SYN_SENT'
        self.syn_attempt = 0
        self.mss = fleet.cfg.mss
        self.peer_window = 0
        self.window_open_at = None
        self.confirmed = False
        self.sent = bytearray()
        self.received = bytearray()
        self.snd_una = 0
        self.snd_nxt = 0
        self.fin_sent = False
        self.fin_received = False
        self.fin_tries = 0
        self.requests: Deque[Request] = collections.deque()
        self.response_consumed = 0
        self.rto_us = fleet.rto_us
        self.syn_timer = Timer(fleet.env, self._on_syn_timeout)
        self.rto = Timer(fleet.env, self._on_rto)
        self.persist = Timer(fleet.env, self._on_persist)

    # -- wire helpers -----------------------------------------------------------------------

    @property
    def rcv_nxt(self) -> int:
        return wire_seq(self.irs, len(self.received) + int(self.fin_received))

    def _segment(self, flags, seq=None, ack=None, payload=b'') -> Segment:
        return Segment(key=self.key, seq=wire_seq(self.isn, self.snd_nxt) if seq is None else seq,
                       ack=self.rcv_nxt if ack is None else ack, flags=flags, window=self.fleet.cfg.window,
                       payload=payload)

    def _ack(self):
        self.fleet.send(self._segment(ACK))

    def open(self):
        self.fleet.counters['syns_sent'] += 1
        self.fleet.send(Segment(key=self.key, seq=self.isn, flags=SYN, window=self.fleet.cfg.window,
                                options=TcpOptions(mss=self.fleet.cfg.mss)))
        schedule = self.fleet.syn_schedule_us
        self.syn_timer.arm(schedule[0] if schedule else 0)

    def close_timers(self):
        self.syn_timer.cancel()
        self.rto.cancel()
        self.persist.cancel()

    # -- application --------------------------------------------------------------------------

    def enqueue(self, req: Request):
        self.requests.append(req)
        self.sent += pattern(self.fleet.salt(self.key), len(self.sent), self.fleet.cfg.request_size)
        self.try_send()

    def try_send(self):
        if self.state != 'ESTABLISHED':
            return
        while self.snd_nxt < len(self.sent):
            room = self.peer_window - (self.snd_nxt - self.snd_una)
            if room <= 0:
                break
            n = min(self.mss, room, len(self.sent) - self.snd_nxt)
            payload = bytes(self.sent[self.snd_nxt:self.snd_nxt + n])
            self.fleet.send(self._segment(ACK | TcpFlags.PSH, payload=payload))
            self.snd_nxt += n
            if not self.rto.armed:
                self.rto.arm(self.rto_us)
        if self.snd_nxt < len(self.sent) and self.peer_window == 0 and self.snd_una == self.snd_nxt:
            if not self.persist.armed:
                self.persist.arm(self.rto_us)

    def _send_fin(self):
        self.fin_sent = True
        self.state = 'FIN_WAIT'
        self.fleet.send(self._segment(FIN | ACK))
        self.rto.arm(self.rto_us)

    # -- segment input ------------------------------------------------------------------------

    def on_segment(self, s: Segment):
        flags = s.flags
        if flags & RST:
            if self._rst_acceptable(s):
                self.fleet.on_reset(self)
            return
        if flags & SYN:
            if not flags & ACK:
                return
            self._on_synack(s)
            return
        if self.state == 'SYN_SENT':
            return
        if flags & ACK:
            self._on_ack(s)
        if self.state == 'CLOSED':
            return
        if s.payload or flags & FIN:
            if stream_offset(self.irs, s.seq) == len(self.received) and not self.fin_received:
                self.received += s.payload
                self._confirm()
                self._complete_responses()
                if flags & FIN:
                    self.fin_received = True
                    if not self.fin_sent:
                        self.fin_sent = True
                        self.fleet.send(self._segment(FIN | ACK))
                    else:
                        self._ack()
                        self.fleet.finish(self)
                        return
            self._ack()
        self.try_send()

    def _rst_acceptable(self, s: Segment) -> bool:
        """A reset must acknowledge our SYN, or once synchronized fall into the receive window."""
        if self.state == 'SYN_SENT':
            return bool(s.flags & ACK) and s.ack == (self.isn + 1) % MOD32
        return (s.seq - self.rcv_nxt) % MOD32 < self.fleet.cfg.window

    def _on_synack(self, s: Segment):
        if self.state == 'SYN_SENT':
            if s.ack != (self.isn + 1) % MOD32:
                return
            self.syn_timer.cancel()
            self.irs = s.seq
            self.state = 'ESTABLISHED'
            if s.options.mss:
                self.mss = min(self.mss, s.options.mss)
            self.fleet.counters['handshakes_completed'] += 1
        elif s.seq != self.irs:
            return
        self.peer_window = s.window
        self._ack()
        self._note_window()
        self.try_send()

    def _on_ack(self, s: Segment):
        self.peer_window = s.window
        acked = stream_offset(self.isn, s.ack)
        limit = self.snd_nxt + int(self.fin_sent)
        if self.snd_una < acked <= limit:
            self.snd_una = min(acked, self.snd_nxt)
            self._confirm()
            self.rto_us = self.fleet.rto_us
            if self.snd_una == self.snd_nxt and not (self.fin_sent and acked <= self.snd_nxt):
                self.rto.cancel()
            else:
                self.rto.arm(self.rto_us)
        self._note_window()

    def _note_window(self):
        if self.peer_window > 0:
            self.persist.cancel()
            if self.window_open_at is None:
                self.window_open_at = self.fleet.env.now

    def _confirm(self):
        """The peer took our data or sent its own: setup is over, record when the window opened."""
        if not self.confirmed and self.window_open_at is not None:
            self.confirmed = True
            self.fleet.setup_latencies_us.append(self.window_open_at - self.t_open)

    def _complete_responses(self):
        size = self.fleet.cfg.response_size
        while self.requests and len(self.received) - self.response_consumed >= size:
            self.response_consumed += size
            req = self.requests.popleft()
            req.t_done = self.fleet.env.now
            self.fleet.counters['responses'] += 1
        if not self.requests and self.fleet.per_request and not self.fin_sent and self.snd_una == len(self.sent):
            self._send_fin()

    # -- timers -------------------------------------------------------------------------------

    def _on_syn_timeout(self):
        if self.state != 'SYN_SENT':
            return
        schedule = self.fleet.syn_schedule_us
        self.syn_attempt += 1
        if self.syn_attempt > len(schedule):
            self.fleet.on_give_up(self)
            return
        self.fleet.counters['syn_retransmits'] += 1
        self.fleet.send(Segment(key=self.key, seq=self.isn, flags=SYN, window=self.fleet.cfg.window,
                                options=TcpOptions(mss=self.fleet.cfg.mss)))
        nxt = schedule[self.syn_attempt] if self.syn_attempt < len(schedule) else 2 * schedule[-1]
        self.syn_timer.arm(nxt)

    def _on_rto(self):
        if self.state == 'CLOSED':
            return
        if self.snd_una < self.snd_nxt:
            # go-back-N
            self.fleet.counters['data_retransmits'] += 1
            self.snd_nxt = self.snd_una
            self.try_send()
        elif self.fin_sent:
            self.fin_tries += 1
            if self.fin_tries > FIN_RETRIES:
                self.fleet.finish(self)
                return
            self.fleet.send(self._segment(FIN | ACK))
        else:
            return
        self.rto_us = min(self.rto_us * 2, MAX_RTO_US)
        self.rto.arm(self.rto_us)

    def _on_persist(self):
        """Zero-window probe: repeat the handshake ACK and send an ACK one below both windows."""
        if self.state != 'ESTABLISHED' or self.peer_window > 0:
            return
        self.fleet.counters['window_probes'] += 1
        self._ack()
        probe_seq = (wire_seq(self.isn, self.snd_nxt) - 1) % MOD32
        self.fleet.send(self._segment(ACK, seq=probe_seq, ack=(self.rcv_nxt - 1) % MOD32))
        self.rto_us = min(self.rto_us * 2, MAX_RTO_US)
        self.persist.arm(self.rto_us)


class ClientModel:
    """
    Client fleet issuing requests over a fixed number of connection slots.

    Parameters
    ----------
    env: simpy.Environment
    rng: numpy.random.Generator
    cfg: ClientsSection
    server_ip, server_port: int
    send: callable
        hands a segment to the link toward the proxy
    stop_us: int
        no requests are issued from this time on
    """

    def __init__(self, env: simpy.Environment, rng: np.random.Generator, cfg, server_ip: int, server_port: int,
                 send, stop_us: int, source_ip: int, open_stagger_us: int = 5000):
        self.env = env
        self.rng = rng
        self.cfg = cfg
        self.server_ip = server_ip
        self.server_port = server_port
        self._send = send
        self.stop_us = stop_us
        self.ips = frozenset(source_ip + i for i in range(cfg.source_count))
        self._ip_list = sorted(self.ips)
        self.per_request = cfg.connection_mode == 'per-request'
        self.rto_us = int(cfg.data_retransmit_timeout_ms * 1000)
        self.syn_schedule_us = [int(t * 1e6) for t in cfg.syn_retransmit_schedule_s]
        self.open_stagger_us = open_stagger_us

        self.slots: List[Optional[ClientConnection]] = [None] * cfg.parallel_connections
        self.by_key: Dict[FlowKey, ClientConnection] = {}
        self.closed: List[ClientConnection] = []
        self.requests: List[Request] = []
        self.setup_latencies_us: List[int] = []
        self.counters = collections.Counter()
        self._next_port = PORT_MIN
        self._rr = 0

        if cfg.parallel_connections:
            if not self.per_request:
                env.process(self._open_all())
            if cfg.request_rate > 0:
                env.process(self._generate())

    def send(self, s: Segment):
        self._send(s)

    def salt(self, key: FlowKey) -> int:
        return (key.src_port * 13 + key.src_ip) % 251

    def _new_key(self, slot: int) -> FlowKey:
        port = self._next_port
        self._next_port = PORT_MIN + (self._next_port + 1 - PORT_MIN) % (PORT_MAX - PORT_MIN + 1)
        ip = self._ip_list[slot % len(self._ip_list)]
        return FlowKey(ip, self.server_ip, port, self.server_port)

    def _connect(self, slot: int, t_open: Optional[int] = None, key: Optional[FlowKey] = None) -> ClientConnection:
        key = key if key is not None else self._new_key(slot)
        conn = ClientConnection(self, slot, key, self.env.now if t_open is None else t_open)
        self.by_key[conn.key] = conn
        if not self.per_request:
            self.slots[slot] = conn
        self.counters['connections_opened'] += 1
        conn.open()
        return conn

    def _open_all(self):
        for slot in range(len(self.slots)):
            if self.slots[slot] is None:
                self._connect(slot)
            yield self.env.timeout(self.open_stagger_us)

    def _generate(self):
        interval = 1e6 / self.cfg.request_rate
        t = 0.0
        while True:
            if self.cfg.arrival == 'poisson':
                t += self.rng.exponential(interval)
            else:
                t += interval
            wait = int(t) - self.env.now
            if wait > 0:
                yield self.env.timeout(wait)
            if self.env.now >= self.stop_us:
                return
            self.issue_request()

    def issue_request(self):
        now = self.env.now
        req = Request(now, now + int(self.cfg.request_timeout_s * 1e6))
        self.requests.append(req)
        slot = self._rr
        self._rr = (self._rr + 1) % len(self.slots)
        if self.per_request:
            conn = self._connect(slot)
        else:
            conn = self.slots[slot]
            if conn is None:
                conn = self._connect(slot)
        conn.enqueue(req)

    def receive(self, s: Segment):
        conn = self.by_key.get(s.key.reverse())
        if conn is None:
            self.counters['segments_unmatched'] += 1
            return
        conn.on_segment(s)

    def _retire(self, conn: ClientConnection):
        conn.close_timers()
        conn.state = 'CLOSED'
        self.by_key.pop(conn.key, None)
        self.closed.append(conn)
        if not self.per_request and self.slots[conn.slot] is conn:
            self.slots[conn.slot] = None

    def on_reset(self, conn: ClientConnection):
        self.counters['resets'] += 1
        pending = [r for r in conn.requests if r.t_done is None]
        self._retire(conn)
        if not self.cfg.app_retry_on_rst:
            return
        self.counters['app_retries'] += 1
        t_open = conn.t_open if not conn.confirmed else None
        key = conn.key if self.cfg.rst_retry_port == 'same' else None
        fresh = self._connect(conn.slot, t_open, key)
        for req in pending:
            fresh.enqueue(req)

    def on_give_up(self, conn: ClientConnection):
        self.counters['connection_failures'] += 1
        self._retire(conn)
        if not self.per_request and self.env.now < self.stop_us:
            self._connect(conn.slot)

    def finish(self, conn: ClientConnection):
        self.counters['connections_closed'] += 1
        self._retire(conn)

    def connections(self) -> List[ClientConnection]:
        return list(self.by_key.values()) + self.closed
