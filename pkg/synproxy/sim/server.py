"""Webserver model: finite SYN backlog, SYN/ACK retransmission, fixed-size responses."""
import collections
import logging
from typing import Dict, Optional

import numpy as np
import simpy

from ..cookie import CookieKey, DEFAULT_MSS, encode_cookie, verify_cookie
from ..errors import CookieRejected
from ..packet import FlowKey, Segment, TcpFlags, TcpOptions
from .tcp import MOD32, Timer, later, pattern, stream_offset, wire_seq

logger = logging.getLogger(__name__)

SYN = TcpFlags.SYN
ACK = TcpFlags.ACK
FIN = TcpFlags.FIN
RST = TcpFlags.RST

FIN_RETRIES = 3


class HalfOpen:
    __slots__ = ('key', 'isn', 'irs', 'mss', 'retries')

    def __init__(self, key: FlowKey, isn: int, irs: int, mss: int):
        self.key = key
        self.isn = isn
        self.irs = irs
        self.mss = mss
        self.retries = 0


class ServerConnection:
    """Established connection as seen by the server. Offsets count application bytes."""

    def __init__(self, server: 'ServerModel', key: FlowKey, isn: int, irs: int, mss: int, peer_window: int):
        self.server = server
        self.key = key
        self.isn = isn
        self.irs = irs
        self.mss = mss
        self.peer_window = peer_window
        self.received = bytearray()
        self.sent = bytearray()
        self.snd_una = 0
        self.snd_nxt = 0
        self.requests_seen = 0
        self.fin_received = False
        self.fin_sent = False
        self.fin_acked = False
        self.fin_tries = 0
        self.rto_us = server.rto_us
        self.rto = Timer(server.env, self._on_rto)

    @property
    def rcv_nxt(self) -> int:
        return wire_seq(self.irs, len(self.received) + int(self.fin_received))

    @property
    def snd_seq(self) -> int:
        return wire_seq(self.isn, self.snd_nxt)

    def segment(self, flags, seq=None, payload=b'') -> Segment:
        return Segment(key=self.key.reverse(), seq=self.snd_seq if seq is None else seq, ack=self.rcv_nxt,
                       flags=flags, window=self.server.cfg.window, payload=payload)

    def on_segment(self, s: Segment):
        if s.flags & ACK:
            self._on_ack(s)
        if s.payload or s.flags & FIN:
            offset = stream_offset(self.irs, s.seq)
            if offset == len(self.received) and not self.fin_received:
                self.received += s.payload
                self._serve_complete_requests()
                if s.flags & FIN:
                    self.fin_received = True
                    self._close()
                    return
            self.server.send(self.segment(ACK))
        elif stream_offset(self.irs, s.seq) != len(self.received) + int(self.fin_received):
            # probe below the receive window
            self.server.send(self.segment(ACK))
        self.try_send()

    def _on_ack(self, s: Segment):
        acked = stream_offset(self.isn, s.ack)
        self.peer_window = s.window
        limit = self.snd_nxt + int(self.fin_sent)
        if self.snd_una < acked <= limit:
            if self.fin_sent and acked == len(self.sent) + 1:
                self.fin_acked = True
                acked = len(self.sent)
            self.snd_una = acked
            self.rto_us = self.server.rto_us
            if self.snd_una == self.snd_nxt and not (self.fin_sent and not self.fin_acked):
                self.rto.cancel()
            else:
                self.rto.arm(self.rto_us)
        if self.fin_acked and self.fin_received:
            self.server.forget(self.key)

    def _serve_complete_requests(self):
        size = self.server.request_size
        while len(self.received) >= (self.requests_seen + 1) * size:
            self.requests_seen += 1
            later(self.server.env, self.server.cfg.service_time_us, self._respond)

    def _respond(self):
        if self.key not in self.server.established:
            return
        self.sent += pattern(self.server.salt(self.key), len(self.sent), self.server.response_size)
        self.server.counters['responses'] += 1
        self.try_send()

    def try_send(self):
        while self.snd_nxt < len(self.sent):
            room = self.peer_window - (self.snd_nxt - self.snd_una)
            if room <= 0:
                break
            n = min(self.mss, room, len(self.sent) - self.snd_nxt)
            payload = bytes(self.sent[self.snd_nxt:self.snd_nxt + n])
            self.server.send(self.segment(ACK | TcpFlags.PSH, payload=payload))
            self.snd_nxt += n
            if not self.rto.armed:
                self.rto.arm(self.rto_us)

    def _close(self):
        """Peer sent FIN: acknowledge it together with our own FIN."""
        self.fin_sent = True
        self.server.send(self.segment(FIN | ACK))
        self.rto.arm(self.rto_us)

    def _on_rto(self):
        if self.fin_sent and not self.fin_acked and self.snd_una == self.snd_nxt:
            self.fin_tries += 1
            if self.fin_tries > FIN_RETRIES:
                self.server.forget(self.key)
                return
            self.server.send(self.segment(FIN | ACK))
        else:
            # go-back-N
            self.snd_nxt = self.snd_una
            self.server.counters['data_retransmits'] += 1
            self.try_send()
        self.rto_us = min(self.rto_us * 2, self.server.max_rto_us)
        if self.snd_una < self.snd_nxt or (self.fin_sent and not self.fin_acked):
            self.rto.arm(self.rto_us)


class ServerModel:
    """
    Server TCP stack with a bounded backlog of half-open connections.

    Parameters
    ----------
    env: simpy.Environment
    rng: numpy.random.Generator
        draws the initial sequence numbers
    cfg: ServerSection
    ip, port: int
    send: callable
        hands a segment to the link toward the proxy
    request_size, response_size: int
    cookie_key: CookieKey, optional
        key of the server's own SYN cookies, used when `cfg.syncookies` is set
    """

    def __init__(self, env: simpy.Environment, rng: np.random.Generator, cfg, ip: int, port: int, send,
                 request_size: int, response_size: int, rto_us: int = 200_000,
                 cookie_key: Optional[CookieKey] = None):
        self.env = env
        self.rng = rng
        self.cfg = cfg
        self.ip = ip
        self.port = port
        self._send = send
        self.request_size = request_size
        self.response_size = response_size
        self.rto_us = rto_us
        self.max_rto_us = 60 * rto_us
        self.cookie_key = cookie_key or CookieKey.from_seed(0)
        self.backlog: 'collections.OrderedDict[FlowKey, HalfOpen]' = collections.OrderedDict()
        self.established: Dict[FlowKey, ServerConnection] = {}
        self.counters = collections.Counter()
        self.backlog_high_water = 0

    def send(self, s: Segment):
        self.counters['segments_sent'] += 1
        self._send(s)

    def salt(self, key: FlowKey) -> int:
        return (key.src_port * 7 + key.src_ip) % 251

    def forget(self, key: FlowKey):
        conn = self.established.pop(key, None)
        if conn is not None:
            conn.rto.cancel()

    def receive(self, s: Segment):
        self.counters['segments_received'] += 1
        key = s.key
        if s.flags & RST:
            if self.backlog.pop(key, None) is not None or key in self.established:
                self.counters['rst_received'] += 1
            self.forget(key)
            return

        conn = self.established.get(key)
        if s.flags & SYN:
            if s.flags & ACK:
                return
            if conn is not None:
                return
            self._on_syn(s)
            return
        if conn is not None:
            conn.on_segment(s)
            return
        if s.flags & ACK:
            self._on_ack_without_connection(s)

    def _on_syn(self, s: Segment):
        key = s.key
        half = self.backlog.get(key)
        if half is not None:
            self._send_synack(half)
            return
        if len(self.backlog) >= self.cfg.backlog_capacity:
            if self.cfg.syncookies:
                self.counters['cookie_synacks'] += 1
                cookie = encode_cookie(self.cookie_key, key, self.env.now / 1e6, s.options.mss)
                self.send(Segment(key=key.reverse(), seq=cookie, ack=(s.seq + 1) % MOD32, flags=SYN | ACK,
                                  window=self.cfg.window, options=TcpOptions(mss=self.cfg.mss)))
                return
            if self.cfg.backlog_policy == 'drop-new':
                self.counters['backlog_drops'] += 1
                return
            self.backlog.popitem(last=False)
            self.counters['backlog_evictions'] += 1

        mss = min(self.cfg.mss, s.options.mss or DEFAULT_MSS)
        half = HalfOpen(key, int(self.rng.integers(0, MOD32)), s.seq, mss)
        self.backlog[key] = half
        self.counters['tcb_allocations'] += 1
        self.backlog_high_water = max(self.backlog_high_water, len(self.backlog))
        self._send_synack(half)
        later(self.env, self.cfg.synack_initial_timeout_s * 1e6, self._synack_timeout, half, 0)

    def _send_synack(self, half: HalfOpen):
        self.send(Segment(key=half.key.reverse(), seq=half.isn, ack=(half.irs + 1) % MOD32, flags=SYN | ACK,
                          window=self.cfg.window, options=TcpOptions(mss=self.cfg.mss)))

    def _synack_timeout(self, half: HalfOpen, attempt: int):
        if self.backlog.get(half.key) is not half or half.retries != attempt:
            return
        if half.retries >= self.cfg.synack_retries:
            del self.backlog[half.key]
            self.counters['tcb_timeouts'] += 1
            return
        half.retries += 1
        self.counters['synack_retransmits'] += 1
        self._send_synack(half)
        timeout_us = self.cfg.synack_initial_timeout_s * 1e6 * (2 ** half.retries)
        later(self.env, timeout_us, self._synack_timeout, half, half.retries)

    def _on_ack_without_connection(self, s: Segment):
        key = s.key
        half = self.backlog.get(key)
        if half is not None and s.ack == (half.isn + 1) % MOD32:
            del self.backlog[key]
            self._establish(key, half.isn, half.irs, half.mss, s)
            return
        if half is None and self.cfg.syncookies:
            try:
                mss = verify_cookie(self.cookie_key, key, s.ack, self.env.now / 1e6)
            except CookieRejected:
                pass
            else:
                self.counters['tcb_allocations'] += 1
                self._establish(key, (s.ack - 1) % MOD32, (s.seq - 1) % MOD32, min(mss, self.cfg.mss), s)
                return
        self.counters['rst_sent'] += 1
        self.send(Segment(key=key.reverse(), seq=s.ack, flags=RST, window=0))

    def _establish(self, key: FlowKey, isn: int, irs: int, mss: int, s: Segment):
        conn = ServerConnection(self, key, isn, irs, mss, s.window)
        self.established[key] = conn
        self.counters['established'] += 1
        conn.on_segment(s)

    def received_stream(self, key: FlowKey) -> Optional[bytes]:
        conn = self.established.get(key)
        return None if conn is None else bytes(conn.received)
