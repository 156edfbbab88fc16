"""Command line entry point `synproxy`: sim, sweep, replay, cookie and bench."""
import argparse
import collections
import ipaddress
import logging
import sys
from pathlib import Path

import pandas as pd

from . import bench as bench_mod
from .config import bundled_config, load_config
from .cookie import (DEFAULT_TABLE, MAX_WINDOW, CookieKey, encode_cookie, unpack, verify_cookie)
from .engine import Drop, Emit, ProxyEngine, Strategy, StrategyConfig, DEFAULT_BATCH_SIZE
from .errors import ConfigInvalid, CookieRejected, MalformedFrame, TruncatedFile, UnsupportedCapture
from .packet import FlowKey, parse_segment, serialize_segment
from .pcap import PcapRecord, iter_pcap, write_pcap

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_INVALID = 2
EXIT_IO = 3

DROPS_SCHEMA = 'synproxy.drops/1'
SWEEP_SCHEMA = 'synproxy.sweep/1'


def _config_path(text):
    """A file path, or the name of a bundled config such as 'quickstart'."""
    path = Path(text)
    if not path.exists() and bundled_config(text).exists():
        return bundled_config(text)
    return path


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(v) for v in text.split(',') if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError('not a comma separated list: {!r}'.format(text))
    return parse


def _ip(text):
    try:
        return int(ipaddress.IPv4Address(text))
    except ValueError:
        raise argparse.ArgumentTypeError('not an IPv4 address: {!r}'.format(text))


def _port(text):
    try:
        port = int(text)
        if not 0 <= port <= 0xffff:
            raise ValueError(port)
    except ValueError:
        raise argparse.ArgumentTypeError('not a TCP port: {!r}'.format(text))
    return port


def _int_auto(text):
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError('not an integer: {!r}'.format(text))


def _progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


# -- sim / sweep -----------------------------------------------------------------------------

def cmd_sim(args) -> int:
    from .sim import run_scenario

    cfg = load_config(_config_path(args.config), args.set)
    report = run_scenario(cfg, args.seed, args.duration)
    report.write(args.out)
    print(report.summary())
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sim import run_sweep

    cfg = load_config(_config_path(args.config), args.set)
    frame = run_sweep(cfg, args.rates, args.strategies, args.seed, args.duration, progress=_progress(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame.insert(0, 'schema', SWEEP_SCHEMA)
    frame.to_csv(out / 'sweep.csv', index=False, float_format='%.9g')
    print(frame.drop(columns='schema').to_string(index=False))
    if args.plot:
        _save_sweep_figures(frame, out)
    return EXIT_OK


def _save_sweep_figures(frame, out: Path):
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
    from . import plots

    for name, fig in (('success_probability', plots.show_success_probability(frame)),
                      ('processed_flood', plots.show_processed_flood(frame)),
                      ('request_latency', plots.show_latency_percentiles(frame, 'request'))):
        fig.savefig(out / '{}.png'.format(name), dpi=120, bbox_inches='tight')
        plt.close(fig)
        logger.info('wrote %s', out / '{}.png'.format(name))


# -- replay ----------------------------------------------------------------------------------

def replay(in_path, out_path, engine: ProxyEngine, clock: str = 'pcap-timestamps', fixed_now: float = 0.0):
    """
    Feed every frame of a capture through one engine shard.

    Timer work due by a frame's time (map swaps, whitelist sweeps, handshake retransmissions) runs
    before the frame itself. Emitted segments are written in processing order; with the pcap clock
    they carry the timestamp of the frame that caused them, with the fixed clock consecutive
    microseconds.

    Returns
    -------
    collections.Counter
        drops per reason; frames that do not parse count under 'MalformedFrame'
    """
    drops = collections.Counter()
    out = []

    def collect(actions, record):
        for action in actions:
            if isinstance(action, Emit):
                ts = record.ts_us if clock == 'pcap-timestamps' else len(out)
                out.append(PcapRecord(ts, serialize_segment(action.segment)))
            elif isinstance(action, Drop):
                drops[action.reason.value] += 1

    for record in iter_pcap(in_path):
        now = record.timestamp if clock == 'pcap-timestamps' else fixed_now
        collect(engine.poll(now), record)
        try:
            s = parse_segment(record.frame)
        except MalformedFrame:
            drops['MalformedFrame'] += 1
            continue
        collect(engine.process(s, now), record)
    write_pcap(out_path, out)
    logger.info('replayed %s: %d emitted, %d dropped', in_path, len(out), sum(drops.values()))
    return drops


def cmd_replay(args) -> int:
    cfg = load_config(_config_path(args.config) if args.config else None, args.set)
    if args.strategy is not None:
        cfg = cfg.replace(engine={'strategy': args.strategy})
    key = CookieKey.from_hex(args.key) if args.key else cfg.cookie_key(fallback_seed=cfg.run.seed)
    engine = cfg.replace(engine={'shard_count': 1}).build_engine(key).shards[0]
    drops = replay(args.input, args.output, engine, args.clock, args.now)
    sidecar = Path(str(args.output) + '.drops.csv')
    pd.DataFrame({'schema': DROPS_SCHEMA, 'reason': sorted(drops),
                  'count': [drops[r] for r in sorted(drops)]},
                 columns=['schema', 'reason', 'count']).to_csv(sidecar, index=False)
    print('emitted -> {}, drops -> {}'.format(args.output, sidecar))
    return EXIT_OK


# -- cookie ----------------------------------------------------------------------------------

def cmd_cookie(args) -> int:
    key = CookieKey.from_hex(args.key)
    k = FlowKey(args.src, args.dst, args.sport, args.dport)
    if args.action == 'encode':
        value = encode_cookie(key, k, args.now, args.mss)
        c = unpack(value)
        print('cookie 0x{:08x} t5={} mss_idx={} mss={} hash24=0x{:06x}'.format(
            value, c.t5, c.mss_idx, DEFAULT_TABLE[c.mss_idx], c.hash24))
        return EXIT_OK
    if args.ack is None:
        raise ConfigInvalid('--ack', 'required for verify')
    try:
        mss = verify_cookie(key, k, args.ack, args.now, args.window)
    except CookieRejected as exc:
        print('REJECT {}'.format(exc.reason))
        return EXIT_REJECT
    print('ACCEPT {}'.format(mss))
    return EXIT_OK


# -- bench -----------------------------------------------------------------------------------

def cmd_bench(args) -> int:
    for s in args.strategy:
        StrategyConfig(strategy=s)
    frame = bench_mod.run_bench_sweep(args.strategy, args.packets, args.batch, args.shards, args.mix,
                                      args.seed, progress=_progress(args))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format='%.9g')
    else:
        frame.to_csv(sys.stdout, index=False, float_format='%.9g')
    ratio = bench_mod.auth_cost_ratio(frame)
    if ratio is not None:
        print('auth-cookie/auth-full throughput ratio: {:.3f}'.format(ratio), file=sys.stderr)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='synproxy', description='SYN flood mitigation engine and testbed')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='INFO, repeat for DEBUG')
    parser.add_argument('-q', '--quiet', action='store_true', help='warnings only, no progress bars')
    sub = parser.add_subparsers(dest='command', required=True)

    def add_overrides(p):
        p.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                       help='override one config key, value read as TOML')

    p = sub.add_parser('sim', help='run one simulated scenario')
    p.add_argument('config', help='TOML file or bundled name (quickstart, no-proxy, overload)')
    p.add_argument('--seed', type=int)
    p.add_argument('--duration', type=float, help='seconds, default from the config')
    p.add_argument('--out', default='out', help='directory for metrics.csv and latency_hist.csv')
    add_overrides(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser('sweep', help='success probability and latency over SYN flood rates')
    p.add_argument('config')
    p.add_argument('--rates', type=_csv_list(float), required=True, help='comma separated SYN/s')
    p.add_argument('--strategies', type=_csv_list(str), default=[Strategy.SYNCOOKIE.value],
                   help="comma separated; 'none' runs without the proxy")
    p.add_argument('--seed', type=int)
    p.add_argument('--duration', type=float)
    p.add_argument('--out', default='out')
    p.add_argument('--plot', action='store_true', help='also write PNG figures')
    add_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('replay', help='run a pcap through one engine shard')
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--out', dest='output', required=True)
    p.add_argument('--strategy', choices=[s.value for s in Strategy])
    p.add_argument('--key', help='32 hex digits')
    p.add_argument('--clock', choices=['pcap-timestamps', 'fixed'], default='pcap-timestamps')
    p.add_argument('--now', type=float, default=0.0, help='engine time for --clock fixed')
    p.add_argument('--config')
    add_overrides(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser('cookie', help='encode or verify one SYN cookie')
    p.add_argument('action', choices=['encode', 'verify'])
    p.add_argument('--key', required=True, help='32 hex digits')
    p.add_argument('--src', type=_ip, required=True)
    p.add_argument('--dst', type=_ip, required=True)
    p.add_argument('--sport', type=_port, required=True)
    p.add_argument('--dport', type=_port, required=True)
    p.add_argument('--mss', type=int)
    p.add_argument('--now', type=float, required=True, help='seconds')
    p.add_argument('--ack', type=_int_auto, help='acknowledgment number of the completing ACK')
    p.add_argument('--window', type=int, default=1, choices=range(MAX_WINDOW + 1))
    p.set_defaults(func=cmd_cookie)

    p = sub.add_parser('bench', help='engine throughput without the simulator')
    p.add_argument('--strategy', type=_csv_list(str), default=[Strategy.SYNCOOKIE.value])
    p.add_argument('--packets', type=int, default=100_000)
    p.add_argument('--batch', type=_csv_list(int), default=[DEFAULT_BATCH_SIZE])
    p.add_argument('--shards', type=_csv_list(int), default=[1])
    p.add_argument('--mix', choices=bench_mod.MIXES, default='syn-only')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', help='CSV path, stdout when omitted')
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.quiet or not args.verbose:
        level = logging.WARNING
    else:
        level = logging.DEBUG if args.verbose > 1 else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except (ConfigInvalid, UnsupportedCapture, TruncatedFile) as exc:
        logger.error('%s', exc)
        return EXIT_INVALID
    except ValueError as exc:
        logger.error('invalid argument: %s', exc)
        return EXIT_INVALID
    except OSError as exc:
        logger.error('%s', exc)
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
