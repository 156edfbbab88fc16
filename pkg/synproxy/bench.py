"""
Engine-only throughput measurement.

Synthetic traces are generated in memory, partitioned with `shard_of` and fed to one engine
shard per worker process, so the numbers reflect per-segment processing cost without any
simulator clock. Rows follow BENCH_SCHEMA.
"""
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import List, Sequence

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from .conn_state import SwapMaps
from .cookie import CookieCodec, CookieKey
from .engine import ProxyEngine, Strategy, StrategyConfig, shard_of, DEFAULT_BATCH_SIZE
from .packet import FlowKey, Segment, TcpFlags, TcpOptions
from .whitelist import Whitelist

logger = logging.getLogger(__name__)

BENCH_SCHEMA = 'synproxy.bench/1'
MIXES = ('syn-only', 'handshake-mix')
BENCH_NOW = 1000.0
SPOOF_BASE = 0x64400000  # 100.64.0.0
SERVER_IP = 0x0a000101  # 10.0.1.1
SERVER_PORT = 80


def synthetic_trace(n: int, mix: str = 'syn-only', seed: int = 0, key: CookieKey = None) -> List[Segment]:
    """
    In-memory segments arriving on the client side.

    Parameters
    ----------
    n: int
        number of segments
    mix: str
        'syn-only': n spoofed SYNs from distinct sources.
        'handshake-mix': n/2 flows, each a SYN followed by the ACK completing the cookie handshake.
    seed: int
    key: CookieKey, optional
        key the completing ACKs are computed with; must match the engine's key

    Returns
    -------
    list of Segment
    """
    if mix not in MIXES:
        raise ValueError('mix must be one of {}, got {!r}'.format(MIXES, mix))
    rng = np.random.default_rng(seed)
    flows = n if mix == 'syn-only' else (n + 1) // 2
    ports = rng.integers(1024, 65536, size=flows)
    isns = rng.integers(0, 2 ** 32, size=flows, dtype=np.uint64)
    syn_options = TcpOptions(mss=1460)
    codec = CookieCodec(key if key is not None else CookieKey.from_seed(seed))

    out = []
    for i in range(flows):
        k = FlowKey(SPOOF_BASE + i, SERVER_IP, int(ports[i]), SERVER_PORT)
        x = int(isns[i])
        out.append(Segment(key=k, seq=x, flags=TcpFlags.SYN, options=syn_options))
        if mix == 'handshake-mix':
            y = codec.encode(k, BENCH_NOW, 1460)
            out.append(Segment(key=k, seq=(x + 1) % 2 ** 32, ack=(y + 1) % 2 ** 32, flags=TcpFlags.ACK))
    return out[:n]


def _run_shard(strategy: str, key_hex: str, segments: Sequence[Segment], batch: int):
    cfg = StrategyConfig(strategy=strategy)
    key = CookieKey.from_hex(key_hex)
    whitelist = Whitelist(cfg.whitelist_granularity, hash_key=key.secret) if cfg.is_auth else None
    engine = ProxyEngine(cfg, CookieCodec(key), whitelist, SwapMaps(max(len(segments), 1)))
    start = time.perf_counter()
    for i in range(0, len(segments), batch):
        engine.process_batch(segments[i:i + batch], BENCH_NOW)
    seconds = time.perf_counter() - start
    return len(segments), seconds, engine.codec.hash_invocations


def run_bench(strategy: str = 'syncookie', packets: int = 100_000, batch: int = DEFAULT_BATCH_SIZE,
              shards: int = 1, mix: str = 'syn-only', seed: int = 0) -> pd.DataFrame:
    """
    Measure one (strategy, batch, shards, mix) point.

    Returns one row per shard plus a 'total' row whose pps is the packet count over the slowest
    shard's time.
    """
    if batch < 1:
        raise ValueError('batch must be positive, got {}'.format(batch))
    cfg = StrategyConfig(strategy=strategy, shard_count=shards)
    key = CookieKey.from_seed(seed)
    trace = synthetic_trace(packets, mix, seed, key)
    parts = [[] for _ in range(shards)]
    for s in trace:
        parts[shard_of(s.key, cfg)].append(s)

    if shards == 1:
        results = [_run_shard(cfg.strategy.value, key.hex(), parts[0], batch)]
    else:
        with ProcessPoolExecutor(max_workers=shards) as pool:
            futures = [pool.submit(_run_shard, cfg.strategy.value, key.hex(), part, batch) for part in parts]
            results = [f.result() for f in futures]

    rows = []
    for idx, (n, seconds, hashes) in enumerate(results):
        rows.append({'schema': BENCH_SCHEMA, 'strategy': cfg.strategy.value, 'mix': mix, 'batch': batch,
                     'shards': shards, 'shard': str(idx), 'packets': n, 'seconds': seconds,
                     'pps': n / seconds if seconds > 0 else float('nan'), 'hash_invocations': hashes})
    slowest = max(r['seconds'] for r in rows)
    rows.append({'schema': BENCH_SCHEMA, 'strategy': cfg.strategy.value, 'mix': mix, 'batch': batch,
                 'shards': shards, 'shard': 'total', 'packets': packets, 'seconds': slowest,
                 'pps': packets / slowest if slowest > 0 else float('nan'),
                 'hash_invocations': sum(r['hash_invocations'] for r in rows)})
    logger.info('%s %s batch=%d shards=%d: %.0f pps', cfg.strategy.value, mix, batch, shards, rows[-1]['pps'])
    return pd.DataFrame(rows)


def run_bench_sweep(strategies: Sequence[str], packets: int, batches: Sequence[int], shards: Sequence[int],
                    mix: str = 'syn-only', seed: int = 0, progress: bool = True) -> pd.DataFrame:
    """Cartesian sweep over strategies, batch sizes and shard counts."""
    points = list(itertools.product(strategies, batches, shards))
    frames = [run_bench(strategy, packets, batch, n_shards, mix, seed)
              for strategy, batch, n_shards in tqdm(points, desc='bench', disable=not progress)]
    return pd.concat(frames, ignore_index=True)


def auth_cost_ratio(frame: pd.DataFrame):
    """Total AuthCookie over AuthFull throughput for matching points, or None if either is missing."""
    totals = frame[frame['shard'] == 'total']
    cookie = totals[totals['strategy'] == Strategy.AUTH_COOKIE.value]['pps']
    full = totals[totals['strategy'] == Strategy.AUTH_FULL.value]['pps']
    if cookie.empty or full.empty:
        return None
    return float(cookie.mean() / full.mean())
