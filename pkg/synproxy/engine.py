"""The mitigation state machine.

`ProxyEngine` is one shard: it takes a single inbound segment plus the current time and returns
an `ActionList` of segments to emit on either interface or a drop reason. All state (connection
maps, whitelist, handshake timers) is owned by the shard. `ShardedEngine` routes segments to
shards with `shard_of` so that no state is shared between them.
"""
import collections
import enum
import heapq
import logging
import struct
import zlib
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from .conn_state import (MOD32, ConnEntry, Direction, SpliceState, SwapMaps, track_teardown,
                         DEFAULT_CAPACITY, DEFAULT_SWAP_PERIOD_S)
from .cookie import CookieCodec, CookieKey, MssTable, DEFAULT_WINDOW, MAX_WINDOW
from .errors import CapacityExceeded, ConfigInvalid, CookieRejected, NoMatchingSplice
from .packet import (FlowKey, Segment, TcpFlags, TcpOptions, checksums_valid, mac_from_string,
                     without_checksums)
from .whitelist import DEFAULT_MASK_BITS, DEFAULT_SWEEP_PERIOD_S, Granularity, Whitelist

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 64
DEFAULT_HANDSHAKE_RETRIES = (1.0, 2.0, 4.0)
DEFAULT_WINDOW_SIZE = 65535

SYN = TcpFlags.SYN
ACK = TcpFlags.ACK
RST = TcpFlags.RST
FIN = TcpFlags.FIN
SYNACK = SYN | ACK


class Strategy(str, enum.Enum):
    SYNCOOKIE = 'syncookie'
    AUTH_FULL = 'auth-full'
    AUTH_COOKIE = 'auth-cookie'


class DataDelayMode(str, enum.Enum):
    ZERO_WINDOW = 'zero-window'
    STORE_FIRST_SEGMENT = 'store-first-segment'


class ShardKey(str, enum.Enum):
    SOURCE_IP = 'source-ip'
    FOUR_TUPLE = '4-tuple'


class Interface(str, enum.Enum):
    CLIENT_SIDE = 'client-side'
    SERVER_SIDE = 'server-side'


class DropReason(str, enum.Enum):
    BAD_HASH = 'BadHash'
    STALE_COOKIE = 'StaleCookie'
    NO_MATCHING_SPLICE = 'NoMatchingSplice'
    NOT_WHITELISTED = 'NotWhitelisted'
    CAPACITY_EXCEEDED = 'CapacityExceeded'
    UNKNOWN_FLOW = 'UnknownFlow'
    HANDSHAKE_PENDING = 'HandshakePending'
    STORED_FOR_SPLICE = 'StoredForSplice'
    SECOND_EARLY_SEGMENT = 'SecondEarlySegment'
    BAD_CHECKSUM = 'BadChecksum'
    HANDSHAKE_TIMEOUT = 'HandshakeTimeout'


@dataclass(frozen=True)
class StrategyConfig:
    """
    Strategy selection of an engine.

    `shard_key` is derived when left as None: SynCookie keeps state per 4-tuple, SYN
    authentication with a per-source whitelist keeps it per source address. An explicit value
    contradicting that raises ConfigInvalid.
    """
    strategy: Strategy = Strategy.SYNCOOKIE
    data_delay_mode: DataDelayMode = DataDelayMode.ZERO_WINDOW
    cookie_window: int = DEFAULT_WINDOW
    shard_count: int = 1
    shard_key: Optional[ShardKey] = None
    whitelist_granularity: Granularity = Granularity.SOURCE_IP

    def __post_init__(self):
        try:
            object.__setattr__(self, 'strategy', Strategy(self.strategy))
        except ValueError:
            raise ConfigInvalid('engine.strategy', 'unknown strategy {!r}'.format(self.strategy))
        try:
            object.__setattr__(self, 'data_delay_mode', DataDelayMode(self.data_delay_mode))
        except ValueError:
            raise ConfigInvalid('engine.data_delay_mode', 'unknown mode {!r}'.format(self.data_delay_mode))
        try:
            object.__setattr__(self, 'whitelist_granularity', Granularity(self.whitelist_granularity))
        except ValueError:
            raise ConfigInvalid('whitelist.granularity', 'unknown granularity {!r}'.format(self.whitelist_granularity))
        if not 0 <= self.cookie_window <= MAX_WINDOW:
            raise ConfigInvalid('cookie.window', 'must be within 0..{}, got {}'.format(MAX_WINDOW, self.cookie_window))
        if self.shard_count < 1:
            raise ConfigInvalid('engine.shard_count', 'must be positive, got {}'.format(self.shard_count))

        required = self.required_shard_key
        if self.shard_key is None:
            object.__setattr__(self, 'shard_key', required or ShardKey.FOUR_TUPLE)
            return
        try:
            shard_key = ShardKey(self.shard_key)
        except ValueError:
            raise ConfigInvalid('engine.shard_key', 'unknown shard key {!r}'.format(self.shard_key))
        if required is not None and shard_key is not required:
            raise ConfigInvalid('engine.shard_key', '{} requires shard_key={}'.format(self.strategy.value,
                                                                                      required.value))
        object.__setattr__(self, 'shard_key', shard_key)

    @property
    def required_shard_key(self) -> Optional[ShardKey]:
        if self.strategy is Strategy.SYNCOOKIE:
            return ShardKey.FOUR_TUPLE
        if self.whitelist_granularity is Granularity.SOURCE_IP:
            return ShardKey.SOURCE_IP
        return None

    @property
    def is_auth(self) -> bool:
        return self.strategy is not Strategy.SYNCOOKIE


class Emit(NamedTuple):
    segment: Segment
    interface: Interface


class Drop(NamedTuple):
    reason: DropReason


Action = Union[Emit, Drop]


class ActionList(list):
    """Ordered engine output for one input (or one poll)."""

    @property
    def emitted(self) -> List[Emit]:
        return [a for a in self if isinstance(a, Emit)]

    @property
    def drops(self) -> List[Drop]:
        return [a for a in self if isinstance(a, Drop)]

    def toward(self, interface: Interface) -> List[Segment]:
        return [a.segment for a in self if isinstance(a, Emit) and a.interface is interface]


@dataclass(frozen=True)
class L2Table:
    """Static MAC table: which addresses an emitted frame gets on each egress interface."""
    client_mac: bytes = mac_from_string('02:00:00:00:00:01')
    proxy_client_mac: bytes = mac_from_string('02:00:00:00:01:01')
    server_mac: bytes = mac_from_string('02:00:00:00:00:02')
    proxy_server_mac: bytes = mac_from_string('02:00:00:00:01:02')

    def egress(self, interface: Interface) -> Tuple[bytes, bytes]:
        if interface is Interface.CLIENT_SIDE:
            return self.proxy_client_mac, self.client_mac
        return self.proxy_server_mac, self.server_mac

    def ingress_of(self, s: Segment) -> Interface:
        return Interface.SERVER_SIDE if s.eth_src == self.server_mac else Interface.CLIENT_SIDE


def shard_of(k: FlowKey, cfg: StrategyConfig, ingress: Interface = Interface.CLIENT_SIDE) -> int:
    """
    Stable shard index of a flow.

    4-tuple sharding hashes the two endpoints in sorted order, so both directions of a
    connection land together. Source-IP sharding hashes the client address, which is the
    source of client-side segments and the destination of server-side ones.
    """
    if cfg.shard_count == 1:
        return 0
    if cfg.shard_key is ShardKey.SOURCE_IP:
        ip = k.src_ip if ingress is Interface.CLIENT_SIDE else k.dst_ip
        data = struct.pack('!I', ip)
    else:
        a, b = sorted(((k.src_ip, k.src_port), (k.dst_ip, k.dst_port)))
        data = struct.pack('!IHIH', a[0], a[1], b[0], b[1])
    return zlib.crc32(data) % cfg.shard_count


def _cheap_mix(k: FlowKey) -> int:
    h = (k.src_ip * 0x9E3779B1) ^ (k.dst_ip * 0x85EBCA6B) ^ (((k.src_port << 16) | k.dst_port) * 0xC2B2AE35)
    return (h ^ (h >> 15)) & 0xffffffff


class _Handshake:
    __slots__ = ('syn', 'attempt')

    def __init__(self, syn: Segment):
        self.syn = syn
        self.attempt = 0


class ProxyEngine:
    """
    One engine shard.

    Parameters
    ----------
    config: StrategyConfig
    codec: CookieCodec
    whitelist: Whitelist, optional
        required by the SYN authentication strategies
    conn: SwapMaps, optional
        connection table of the SynCookie strategy
    l2: L2Table, optional
    default_window: int
        window advertised in the proxy's own SYN/ACKs when no zero window is wanted
    validate_checksums: bool
        drop inbound segments whose recorded checksums do not match
    swap_period_s, sweep_period_s: float
        garbage collection periods run from `poll`
    handshake_retries: sequence of float
        retransmission intervals of the proxy's SYN toward the server
    """

    def __init__(self, config: StrategyConfig, codec: CookieCodec, whitelist: Optional[Whitelist] = None,
                 conn: Optional[SwapMaps] = None, l2: Optional[L2Table] = None,
                 default_window: int = DEFAULT_WINDOW_SIZE, validate_checksums: bool = False,
                 swap_period_s: float = DEFAULT_SWAP_PERIOD_S, sweep_period_s: float = DEFAULT_SWEEP_PERIOD_S,
                 handshake_retries: Sequence[float] = DEFAULT_HANDSHAKE_RETRIES):
        self.config = config
        self.codec = codec
        if config.is_auth and whitelist is None:
            whitelist = Whitelist(config.whitelist_granularity)
        self.whitelist = whitelist
        self.conn = conn if conn is not None else SwapMaps()
        self.l2 = l2 if l2 is not None else L2Table()
        self.default_window = default_window
        self.validate_checksums = validate_checksums
        self.swap_period_s = swap_period_s
        self.sweep_period_s = sweep_period_s
        self.handshake_retries = tuple(handshake_retries)
        self.counters = collections.Counter()

        self._decoy_base = int.from_bytes(codec.key.secret[:4], 'big')
        self._handshakes: Dict[FlowKey, _Handshake] = {}
        self._timers: List[Tuple[float, int, FlowKey, int]] = []
        self._timer_seq = 0
        self._next_swap = None
        self._next_sweep = None

        self._handlers = {
            Strategy.SYNCOOKIE: self._process_syncookie,
            Strategy.AUTH_FULL: self._process_auth,
            Strategy.AUTH_COOKIE: self._process_auth,
        }

    # -- output helpers ---------------------------------------------------------------------

    def _emit(self, s: Segment, interface: Interface) -> ActionList:
        return ActionList([self._emission(s, interface)])

    def _emission(self, s: Segment, interface: Interface) -> Emit:
        src, dst = self.l2.egress(interface)
        self.counters['emit.' + interface.value] += 1
        return Emit(replace(s, eth_src=src, eth_dst=dst), interface)

    def _drop(self, reason: DropReason) -> ActionList:
        self.counters['drop.' + reason.value] += 1
        return ActionList([Drop(reason)])

    @property
    def state_entries(self) -> int:
        """Per-flow connection entries plus occupied whitelist slots."""
        n = len(self.conn)
        if self.whitelist is not None:
            n += self.whitelist.occupancy()
        return n

    # -- entry points -----------------------------------------------------------------------

    def process(self, s: Segment, now: float, ingress: Optional[Interface] = None) -> ActionList:
        """Run one inbound segment through the configured strategy; `now` is in seconds."""
        if ingress is None:
            ingress = self.l2.ingress_of(s)
        self.counters['segments'] += 1
        if self.validate_checksums and not checksums_valid(s):
            return self._drop(DropReason.BAD_CHECKSUM)
        return self._handlers[self.config.strategy](s, now, ingress)

    def process_batch(self, items: Iterable, now: float) -> List[ActionList]:
        """Process segments (or (segment, ingress) pairs) in order."""
        out = []
        for item in items:
            if isinstance(item, Segment):
                out.append(self.process(item, now))
            else:
                out.append(self.process(item[0], now, item[1]))
        return out

    def poll(self, now: float) -> ActionList:
        """Timer work: map swaps, whitelist sweeps and handshake retransmissions due by `now`."""
        acts = ActionList()
        if self._next_swap is None:
            self._next_swap = now + self.swap_period_s
            self._next_sweep = now + self.sweep_period_s
        while now >= self._next_swap:
            self.counters['conn.swap_dropped'] += self.conn.swap()
            self._next_swap += self.swap_period_s
        while now >= self._next_sweep:
            if self.whitelist is not None:
                self.counters['whitelist.evicted'] += self.whitelist.sweep()
            self._next_sweep += self.sweep_period_s

        while self._timers and self._timers[0][0] <= now:
            deadline, _, k, attempt = heapq.heappop(self._timers)
            hs = self._handshakes.get(k)
            if hs is None or hs.attempt != attempt:
                continue
            e = self.conn.peek(k)
            if e is None or e.established:
                del self._handshakes[k]
                continue
            if attempt < len(self.handshake_retries):
                self.counters['handshake_retransmits'] += 1
                acts.append(self._emission(hs.syn, Interface.SERVER_SIDE))
                hs.attempt += 1
                self._arm(k, deadline, hs.attempt)
            else:
                logger.debug('no SYN/ACK from server for %s, dropping splice', k)
                self.conn.remove(k)
                del self._handshakes[k]
                self.counters['drop.' + DropReason.HANDSHAKE_TIMEOUT.value] += 1
                acts.append(Drop(DropReason.HANDSHAKE_TIMEOUT))
        return acts

    def _arm(self, k: FlowKey, base: float, attempt: int):
        if attempt < len(self.handshake_retries):
            interval = self.handshake_retries[attempt]
        else:
            interval = 2 * self.handshake_retries[-1] if self.handshake_retries else 0.0
        self._timer_seq += 1
        heapq.heappush(self._timers, (base + interval, self._timer_seq, k, attempt))

    # -- SYN cookie strategy ----------------------------------------------------------------

    def _process_syncookie(self, s: Segment, now: float, ingress: Interface) -> ActionList:
        flags = s.flags
        if ingress is Interface.CLIENT_SIDE:
            if flags & SYN and not flags & (ACK | RST):
                return self.syncookie_handle_syn(s, now)
            e = self.conn.lookup(s.key)
            if e is None:
                if flags & ACK and not flags & (SYN | FIN | RST):
                    return self.syncookie_handle_client_ack(s, now)
                return self._drop(DropReason.UNKNOWN_FLOW)
            if e.established:
                return self._forward_established(s, s.key, e, Direction.CLIENT_TO_SERVER)
            return self._client_while_awaiting(s, e)

        if flags & SYNACK == SYNACK:
            return self.syncookie_handle_server_synack(s, now)
        k = s.key.reverse()
        e = self.conn.lookup(k)
        if e is None:
            return self._drop(DropReason.UNKNOWN_FLOW)
        if e.established:
            return self._forward_established(s, k, e, Direction.SERVER_TO_CLIENT)
        if flags & RST:
            self._forget(k)
            rst = Segment(key=s.key, seq=(e.delta + 1) % MOD32, flags=RST, window=0)
            return self._emit(rst, Interface.CLIENT_SIDE)
        return self._drop(DropReason.HANDSHAKE_PENDING)

    def syncookie_handle_syn(self, s: Segment, now: float) -> ActionList:
        """Answer a client SYN with a cookie SYN/ACK; no state is created."""
        mss = s.options.mss
        cookie = self.codec.encode(s.key, now, mss)
        zero = self.config.data_delay_mode is DataDelayMode.ZERO_WINDOW
        synack = Segment(key=s.key.reverse(), seq=cookie, ack=(s.seq + 1) % MOD32, flags=SYNACK,
                         window=0 if zero else self.default_window,
                         options=TcpOptions(mss=self.codec.quantized(mss)))
        return self._emit(synack, Interface.CLIENT_SIDE)

    def syncookie_handle_client_ack(self, s: Segment, now: float) -> ActionList:
        """Verify the cookie of a handshake-completing ACK and open the server-side handshake."""
        try:
            mss = self.codec.verify(s.key, s.ack, now)
        except CookieRejected as exc:
            return self._drop(DropReason(exc.reason))

        pending = None
        if self.config.data_delay_mode is DataDelayMode.STORE_FIRST_SEGMENT and s.payload:
            pending = s
        try:
            self.conn.insert(s.key, ConnEntry(delta=(s.ack - 1) % MOD32, pending_data=pending))
        except CapacityExceeded:
            logger.debug('connection table full, dropping handshake of %s', s.key)
            return self._drop(DropReason.CAPACITY_EXCEEDED)

        syn = Segment(key=s.key, seq=(s.seq - 1) % MOD32, flags=SYN, window=s.window,
                      options=TcpOptions(mss=mss), ttl=s.ttl)
        self._handshakes[s.key] = _Handshake(syn)
        self._arm(s.key, now, 0)
        self.counters['splices.started'] += 1
        return self._emit(syn, Interface.SERVER_SIDE)

    def _client_while_awaiting(self, s: Segment, e: ConnEntry) -> ActionList:
        k = s.key
        if s.flags & RST:
            self._forget(k)
            return self._emit(Segment(key=k, seq=s.seq, flags=RST, window=0), Interface.SERVER_SIDE)
        if self.config.data_delay_mode is DataDelayMode.STORE_FIRST_SEGMENT and s.payload:
            if e.pending_data is not None:
                return self._drop(DropReason.SECOND_EARLY_SEGMENT)
            hs = self._handshakes.get(k)
            if hs is not None and s.seq == (hs.syn.seq + 1) % MOD32:
                self.conn.insert(k, replace(e, pending_data=s))
                return self._drop(DropReason.STORED_FOR_SPLICE)
        return self._drop(DropReason.HANDSHAKE_PENDING)

    def _splice_entry(self, k: FlowKey) -> ConnEntry:
        e = self.conn.lookup(k)
        if e is None:
            raise NoMatchingSplice('no splice for {}'.format(k))
        return e

    def syncookie_handle_server_synack(self, s: Segment, now: float) -> ActionList:
        """Complete the server-side handshake and splice the two halves."""
        k = s.key.reverse()
        try:
            e = self._splice_entry(k)
        except NoMatchingSplice:
            logger.debug('unexpected SYN/ACK for %s', k)
            return self._drop(DropReason.NO_MATCHING_SPLICE)
        if e.established:
            # our handshake ACK got lost, the server retransmits its SYN/ACK
            ack = Segment(key=k, seq=s.ack, ack=(s.seq + 1) % MOD32, flags=ACK, window=self.default_window)
            return self._emit(ack, Interface.SERVER_SIDE)

        y = e.delta
        hs = self._handshakes.pop(k, None)
        client_window = hs.syn.window if hs is not None else self.default_window
        established = replace(e, delta=(s.seq - y) % MOD32, splice_state=SpliceState.ESTABLISHED,
                              pending_data=None)
        self.conn.insert(k, established)
        self.counters['splices.established'] += 1

        acts = ActionList()
        acts.append(self._emission(Segment(key=k, seq=s.ack, ack=(s.seq + 1) % MOD32, flags=ACK,
                                           window=client_window), Interface.SERVER_SIDE))
        if self.config.data_delay_mode is DataDelayMode.ZERO_WINDOW:
            resent = Segment(key=s.key, seq=y, ack=s.ack, flags=SYNACK, window=s.window,
                             options=TcpOptions(mss=s.options.mss))
            acts.append(self._emission(resent, Interface.CLIENT_SIDE))
        elif e.pending_data is not None:
            acts.append(self._emission(self.translate_segment(e.pending_data, established,
                                                              Direction.CLIENT_TO_SERVER),
                                       Interface.SERVER_SIDE))
        return acts

    def translate_segment(self, s: Segment, e: ConnEntry, direction: Direction) -> Segment:
        """Shift sequence numbers between client and server space; checksums are recomputed on output."""
        if direction is Direction.CLIENT_TO_SERVER:
            t = replace(s, ack=(s.ack + e.delta) % MOD32)
        else:
            t = replace(s, seq=(s.seq - e.delta) % MOD32)
        return without_checksums(t)

    def _forward_established(self, s: Segment, k: FlowKey, e: ConnEntry, direction: Direction) -> ActionList:
        t = self.translate_segment(s, e, direction)
        server_view = t if direction is Direction.CLIENT_TO_SERVER else s
        updated, done = track_teardown(e, server_view, direction)
        if done:
            self.conn.remove(k)
            self.counters['splices.closed'] += 1
        elif updated is not e:
            self.conn.insert(k, updated)
        egress = Interface.SERVER_SIDE if direction is Direction.CLIENT_TO_SERVER else Interface.CLIENT_SIDE
        return self._emit(t, egress)

    def _forget(self, k: FlowKey):
        self.conn.remove(k)
        self._handshakes.pop(k, None)

    # -- SYN authentication strategies ------------------------------------------------------

    def _process_auth(self, s: Segment, now: float, ingress: Interface) -> ActionList:
        if ingress is Interface.SERVER_SIDE:
            return self._emit(s, Interface.CLIENT_SIDE)
        source = self.whitelist.source_of(s.key)
        if self.whitelist.check(source):
            return self.auth_passthrough(s)
        flags = s.flags
        if flags & SYN and not flags & (ACK | RST):
            return self.auth_handle_syn(s, now)
        if flags & ACK and not flags & (SYN | RST):
            return self.auth_handle_ack(s, now)
        return self._drop(DropReason.NOT_WHITELISTED)

    def decoy_isn(self, k: FlowKey) -> int:
        return self._decoy_base ^ _cheap_mix(k)

    def auth_handle_syn(self, s: Segment, now: float) -> ActionList:
        """Decoy SYN/ACK toward a not yet whitelisted client."""
        if self.config.strategy is Strategy.AUTH_COOKIE:
            seq = self.codec.encode(s.key, now, s.options.mss)
            options = TcpOptions(mss=self.codec.quantized(s.options.mss))
        else:
            seq = self.decoy_isn(s.key)
            options = TcpOptions(mss=s.options.mss)
        synack = Segment(key=s.key.reverse(), seq=seq, ack=(s.seq + 1) % MOD32, flags=SYNACK,
                         window=self.default_window, options=options)
        return self._emit(synack, Interface.CLIENT_SIDE)

    def auth_handle_ack(self, s: Segment, now: float) -> ActionList:
        """Whitelist the source on a completing ACK and reset the decoy connection."""
        if self.config.strategy is Strategy.AUTH_COOKIE:
            try:
                self.codec.verify(s.key, s.ack, now)
            except CookieRejected as exc:
                return self._drop(DropReason(exc.reason))
        self.whitelist.admit(self.whitelist.source_of(s.key))
        self.counters['whitelist.admitted'] += 1
        rst = Segment(key=s.key.reverse(), seq=s.ack, flags=RST, window=0)
        return self._emit(rst, Interface.CLIENT_SIDE)

    def auth_passthrough(self, s: Segment) -> ActionList:
        return self._emit(s, Interface.SERVER_SIDE)


class ShardedEngine:
    """A set of independent shards behind `shard_of` routing."""

    def __init__(self, config: StrategyConfig, shards: Sequence[ProxyEngine], l2: Optional[L2Table] = None):
        if len(shards) != config.shard_count:
            raise ValueError('expected {} shards, got {}'.format(config.shard_count, len(shards)))
        self.config = config
        self.shards = list(shards)
        self.l2 = l2 if l2 is not None else L2Table()

    @classmethod
    def build(cls, config: StrategyConfig, key: CookieKey, mss_table: MssTable = MssTable(),
              mask_bits: int = DEFAULT_MASK_BITS, capacity: int = DEFAULT_CAPACITY,
              l2: Optional[L2Table] = None, **engine_kwargs) -> 'ShardedEngine':
        l2 = l2 if l2 is not None else L2Table()
        shards = []
        for _ in range(config.shard_count):
            whitelist = Whitelist(config.whitelist_granularity, mask_bits, hash_key=key.secret) \
                if config.is_auth else None
            shards.append(ProxyEngine(config, CookieCodec(key, mss_table, config.cookie_window), whitelist,
                                      SwapMaps(capacity), l2, **engine_kwargs))
        return cls(config, shards, l2)

    def shard_for(self, s: Segment, ingress: Interface) -> int:
        return shard_of(s.key, self.config, ingress)

    def process(self, s: Segment, now: float, ingress: Optional[Interface] = None) -> ActionList:
        if ingress is None:
            ingress = self.l2.ingress_of(s)
        return self.shards[self.shard_for(s, ingress)].process(s, now, ingress)

    def poll(self, now: float) -> ActionList:
        acts = ActionList()
        for shard in self.shards:
            acts.extend(shard.poll(now))
        return acts

    @property
    def counters(self) -> collections.Counter:
        total = collections.Counter()
        for shard in self.shards:
            total.update(shard.counters)
        return total

    @property
    def hash_invocations(self) -> int:
        return sum(shard.codec.hash_invocations for shard in self.shards)

    @property
    def state_entries(self) -> int:
        return sum(shard.state_entries for shard in self.shards)

    @property
    def conn_high_water(self) -> int:
        return sum(shard.conn.high_water for shard in self.shards)
