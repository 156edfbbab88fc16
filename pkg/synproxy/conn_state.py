"""Connection state of the SYN-cookie proxy: per-flow entries in swap-out hash maps.

Entries live in two plain dicts. Inserts go to `active`; a periodic `swap` retires `history` and
demotes `active` to it; lookups copy live entries from `history` back up. An entry untouched for
two swap periods is therefore gone without any per-entry timer.
"""
import enum
import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

from .errors import CapacityExceeded
from .packet import FlowKey, Segment, TcpFlags

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 1 << 20
DEFAULT_SWAP_PERIOD_S = 60.0

MOD32 = 1 << 32


def seq_after(a: int, b: int) -> bool:
    """Serial number comparison a > b in 32-bit sequence space."""
    return a != b and ((a - b) % MOD32) < (1 << 31)


class SpliceState(enum.IntEnum):
    AWAITING_SERVER_HANDSHAKE = 0
    ESTABLISHED = 1


class Direction(enum.IntEnum):
    CLIENT_TO_SERVER = 0
    SERVER_TO_CLIENT = 1


@dataclass(frozen=True)
class ConnEntry:
    """
    State of one spliced flow.

    `delta` holds the proxy's cookie ISN y while the server handshake is pending, and
    (z - y) mod 2**32 once established. `fin_client_seq` / `fin_server_seq` record where each
    side's FIN ends so that its acknowledgment can be recognised; they are bookkeeping next to
    the packed word, like `pending_data`.
    """
    delta: int
    splice_state: SpliceState = SpliceState.AWAITING_SERVER_HANDSHAKE
    fin_client_seen: bool = False
    fin_client_acked: bool = False
    fin_server_seen: bool = False
    fin_server_acked: bool = False
    rst_seen: bool = False
    pending_data: Optional[Segment] = None
    fin_client_seq: Optional[int] = None
    fin_server_seq: Optional[int] = None

    @property
    def established(self) -> bool:
        return self.splice_state is SpliceState.ESTABLISHED

    def pack(self) -> int:
        """Core state as one word: delta in bits 0..31, flags above it."""
        bits = (self.fin_client_seen, self.fin_client_acked, self.fin_server_seen, self.fin_server_acked,
                self.rst_seen, self.established)
        word = self.delta & 0xffffffff
        for i, b in enumerate(bits):
            word |= int(b) << (32 + i)
        return word


class SwapMaps:
    """Active/history map pair with copy-up on lookup."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.capacity = capacity
        self.active: Dict[FlowKey, ConnEntry] = {}
        self.history: Dict[FlowKey, ConnEntry] = {}
        self.high_water = 0

    def __len__(self):
        return len(self.active) + len(self.history)

    def __contains__(self, k: FlowKey):
        return k in self.active or k in self.history

    def insert(self, k: FlowKey, e: ConnEntry):
        if k not in self.active:
            if k in self.history:
                del self.history[k]
            elif len(self) >= self.capacity:
                raise CapacityExceeded('connection table full ({} entries)'.format(self.capacity))
        self.active[k] = e
        self.high_water = max(self.high_water, len(self))

    def lookup(self, k: FlowKey) -> Optional[ConnEntry]:
        e = self.active.get(k)
        if e is not None:
            return e
        e = self.history.pop(k, None)
        if e is not None:
            self.active[k] = e
        return e

    def peek(self, k: FlowKey) -> Optional[ConnEntry]:
        e = self.active.get(k)
        return e if e is not None else self.history.get(k)

    def swap(self) -> int:
        dropped = len(self.history)
        self.history = self.active
        self.active = {}
        if dropped:
            logger.debug('conn map swap dropped %d idle entries', dropped)
        return dropped

    def remove(self, k: FlowKey) -> bool:
        found = self.active.pop(k, None) is not None
        found = (self.history.pop(k, None) is not None) or found
        return found


def track_teardown(e: ConnEntry, s: Segment, direction: Direction) -> Tuple[ConnEntry, bool]:
    """
    Update FIN/RST bookkeeping for one segment of an established flow.

    `s` must be in server sequence space: the translated segment for client to server, the
    segment as received for server to client. Ambiguous segments never terminate early.

    Returns
    -------
    (ConnEntry, bool)
        the updated entry and whether the flow has concluded
    """
    if s.flags & TcpFlags.RST:
        return replace(e, rst_seen=True), True

    changes = {}
    from_client = direction is Direction.CLIENT_TO_SERVER
    if s.flags & TcpFlags.FIN:
        fin_end = (s.seq + len(s.payload)) % MOD32
        if from_client:
            changes.update(fin_client_seen=True, fin_client_seq=fin_end)
        else:
            changes.update(fin_server_seen=True, fin_server_seq=fin_end)

    if s.flags & TcpFlags.ACK:
        if from_client and e.fin_server_seen and not e.fin_server_acked and seq_after(s.ack, e.fin_server_seq):
            changes['fin_server_acked'] = True
        elif not from_client and e.fin_client_seen and not e.fin_client_acked and seq_after(s.ack, e.fin_client_seq):
            changes['fin_client_acked'] = True

    if changes:
        e = replace(e, **changes)
    done = e.fin_client_seen and e.fin_client_acked and e.fin_server_seen and e.fin_server_acked
    return e, done
