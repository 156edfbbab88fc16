"""Wiring of clients, attacker, proxy and server, and the flood-rate sweep built on it."""
import collections
import ipaddress
import logging
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
import simpy
from tqdm.auto import tqdm

from ..config import ScenarioConfig
from ..cookie import CookieKey
from ..engine import DropReason
from ..packet import Segment
from .attacker import AttackerModel
from .client import ClientModel
from .links import Link
from .metrics import MetricsReport, wilson_interval
from .proxy_node import EngineCapacityModel, ProxyNode
from .server import ServerModel

logger = logging.getLogger(__name__)


class Scenario:
    """
    One simulated run. Time is kept in integer microseconds.

    Parameters
    ----------
    cfg: ScenarioConfig
    seed: int, optional
        overrides cfg.run.seed
    duration_s: float, optional
        overrides cfg.run.duration_s
    """

    def __init__(self, cfg: ScenarioConfig, seed: Optional[int] = None, duration_s: Optional[float] = None):
        self.cfg = cfg
        self.seed = cfg.run.seed if seed is None else seed
        self.duration_s = cfg.run.duration_s if duration_s is None else duration_s
        if self.duration_s <= cfg.run.warmup_s:
            raise ValueError('duration {} s must exceed the warmup of {} s'.format(self.duration_s, cfg.run.warmup_s))
        self.duration_us = int(self.duration_s * 1e6)
        self.env = simpy.Environment()

        streams = [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(7)]
        topo = cfg.topology
        self.c2p = Link(self.env, streams[0], topo.client_link_delay_us, topo.jitter_us, topo.loss, 'client->proxy')
        self.p2c = Link(self.env, streams[1], topo.client_link_delay_us, topo.jitter_us, topo.loss, 'proxy->client')
        self.p2s = Link(self.env, streams[2], topo.server_link_delay_us, topo.jitter_us, topo.loss, 'proxy->server')
        self.s2p = Link(self.env, streams[3], topo.server_link_delay_us, topo.jitter_us, topo.loss, 'server->proxy')

        server_ip = int(ipaddress.IPv4Address(topo.server_ip))
        stop_us = self.duration_us - int(cfg.clients.request_timeout_s * 1e6)
        self.counters = collections.Counter()

        self.engine = None
        if cfg.engine.enabled:
            self.engine = cfg.build_engine(cfg.cookie_key(fallback_seed=self.seed))

        self.server = ServerModel(self.env, streams[4], cfg.server, server_ip, topo.server_port,
                                  send=lambda s: self.s2p.transit(s, self.proxy.from_server),
                                  request_size=cfg.clients.request_size, response_size=cfg.clients.response_size,
                                  rto_us=int(cfg.clients.data_retransmit_timeout_ms * 1000),
                                  cookie_key=CookieKey.from_seed(self.seed + 1))
        self.attacker = AttackerModel(self.env, streams[5], cfg.attacker, server_ip, topo.server_port,
                                      send=lambda s: self.c2p.transit(s, self.proxy.from_client),
                                      stop_us=self.duration_us)
        self.client = ClientModel(self.env, streams[6], cfg.clients, server_ip, topo.server_port,
                                  send=lambda s: self.c2p.transit(s, self.proxy.from_client),
                                  stop_us=max(0, stop_us),
                                  source_ip=int(ipaddress.IPv4Address(cfg.clients.source_ip)))
        self.proxy = ProxyNode(self.env, self.engine,
                               EngineCapacityModel(cfg.engine_capacity.ops_per_second, cfg.engine.batch_size),
                               self.p2c, self.p2s, self._deliver_client, self._deliver_server,
                               lambda s: self.attacker.is_spoofed(s.key.src_ip))

    def _deliver_client(self, s: Segment):
        if s.key.dst_ip in self.client.ips:
            self.client.receive(s)
        else:
            self.counters['sink'] += 1

    def _deliver_server(self, s: Segment):
        if self.attacker.is_spoofed(s.key.src_ip):
            self.counters['server_attack_segments'] += 1
        self.server.receive(s)

    def run(self) -> MetricsReport:
        logger.info('running %.1f s scenario, strategy=%s, seed=%d', self.duration_s,
                    self.cfg.engine.strategy if self.engine is not None else 'none', self.seed)
        self.env.run(until=self.duration_us)
        return self.report()

    def report(self) -> MetricsReport:
        cfg = self.cfg
        warmup_us = int(cfg.run.warmup_s * 1e6)
        measured = [r for r in self.client.requests if r.t_issue >= warmup_us]
        succeeded = [r for r in measured if r.succeeded]
        low, high = wilson_interval(len(succeeded), len(measured))
        attack_s = max(1e-9, self.duration_s - cfg.attacker.start_s)
        attack_sent = sum(self.attacker.counters.values())

        m = collections.OrderedDict()
        m['seed'] = self.seed
        m['duration_s'] = self.duration_s
        m['requests_issued'] = len(self.client.requests)
        m['requests_measured'] = len(measured)
        m['requests_succeeded'] = len(succeeded)
        m['success_probability'] = len(succeeded) / len(measured) if measured else float('nan')
        m['success_ci_low'] = low
        m['success_ci_high'] = high
        m['flood_offered_per_s'] = attack_sent / attack_s
        m['flood_processed_per_s'] = self.proxy.counters['attack_processed'] / attack_s

        report = MetricsReport(m, np.asarray(self.client.setup_latencies_us, dtype=np.int64),
                               np.asarray([r.t_done - r.t_issue for r in succeeded], dtype=np.int64))
        report.add_latencies('setup', report.setup_latencies_us)
        report.add_latencies('request', report.request_latencies_us)

        for name in ('connections_opened', 'handshakes_completed', 'connection_failures', 'resets', 'app_retries',
                     'syn_retransmits', 'data_retransmits', 'window_probes'):
            m['client_' + name] = self.client.counters[name]
        for name in ('tcb_allocations', 'backlog_drops', 'backlog_evictions', 'tcb_timeouts', 'synack_retransmits',
                     'cookie_synacks', 'established', 'rst_sent', 'responses'):
            m['server_' + name] = self.server.counters[name]
        m['server_backlog_high_water'] = self.server.backlog_high_water
        m['server_attack_segments'] = self.counters['server_attack_segments']
        m['proxy_processed'] = self.proxy.counters['processed']
        m['proxy_overload_drops'] = self.proxy.counters['overload_drops']

        if self.engine is not None:
            counters = self.engine.counters
            for side in ('client-side', 'server-side'):
                m['engine_emit_' + side.replace('-', '_')] = counters['emit.' + side]
            for reason in DropReason:
                m['engine_drop_' + reason.value] = counters['drop.' + reason.value]
            m['engine_whitelist_admitted'] = counters['whitelist.admitted']
            m['engine_splices_established'] = counters['splices.established']
            m['engine_conn_high_water'] = self.engine.conn_high_water
            m['engine_state_entries'] = self.engine.state_entries
            m['engine_hash_invocations'] = self.engine.hash_invocations

        for link in (self.c2p, self.p2c, self.p2s, self.s2p):
            m['link_{}_lost'.format(link.name.replace('->', '_'))] = link.counters['lost']
        return report


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None, duration: Optional[float] = None) -> MetricsReport:
    """Simulate one configured scenario and return its metrics; identical inputs give identical reports."""
    return Scenario(cfg, seed, duration).run()


def run_sweep(cfg: ScenarioConfig, rates: Sequence[float], strategies: Iterable[str] = ('syncookie',),
              seed: Optional[int] = None, duration: Optional[float] = None, progress: bool = True) -> pd.DataFrame:
    """
    Run the scenario for every (strategy, SYN flood rate) pair.

    Parameters
    ----------
    cfg: ScenarioConfig
    rates: sequence of float
        SYN flood rates in segments per second
    strategies: iterable of str
        engine strategies; 'none' runs without the proxy
    seed: int, optional
    duration: float, optional
    progress: bool
        show a progress bar

    Returns
    -------
    pandas.DataFrame
        one row per run with the headline metrics
    """
    strategies = list(strategies)
    rows = []
    with tqdm(total=len(strategies) * len(rates), desc='sweep', disable=not progress) as bar:
        for strategy in strategies:
            if strategy == 'none':
                base = cfg.replace(engine={'enabled': False})
            else:
                base = cfg.replace(engine={'enabled': True, 'strategy': strategy})
            for rate in rates:
                run_cfg = base.replace(attacker={'syn_flood_rate': float(rate)})
                report = run_scenario(run_cfg, seed, duration)
                rows.append({
                    'strategy': strategy,
                    'syn_flood_rate': float(rate),
                    'success_probability': report['success_probability'],
                    'success_ci_low': report['success_ci_low'],
                    'success_ci_high': report['success_ci_high'],
                    'flood_processed_per_s': report['flood_processed_per_s'],
                    'setup_p50_us': report['setup_p50_us'],
                    'setup_p99_us': report['setup_p99_us'],
                    'request_p50_us': report['request_p50_us'],
                    'request_p90_us': report['request_p90_us'],
                    'request_p99_us': report['request_p99_us'],
                    'request_p999_us': report['request_p999_us'],
                    'server_tcb_allocations': report['server_tcb_allocations'],
                })
                bar.update(1)
    return pd.DataFrame(rows)
