"""Scenario and engine configuration.

A config file is TOML with the sections below; every section maps onto a frozen dataclass. Keys
missing from a file keep their defaults, unknown sections or keys raise ConfigInvalid naming the
dotted key.
"""
import dataclasses
import ipaddress
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .conn_state import DEFAULT_CAPACITY, DEFAULT_SWAP_PERIOD_S
from .cookie import DEFAULT_MSS_TABLE, DEFAULT_WINDOW, CookieKey, MssTable
from .engine import (DEFAULT_BATCH_SIZE, DEFAULT_HANDSHAKE_RETRIES, DEFAULT_WINDOW_SIZE, DataDelayMode,
                     L2Table, ShardedEngine, ShardKey, Strategy, StrategyConfig)
from .errors import ConfigInvalid
from .packet import DEFAULT_MTU, mac_from_string
from .whitelist import DEFAULT_MASK_BITS, DEFAULT_SWEEP_PERIOD_S, Granularity

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / 'configs'


def _require(ok: bool, key: str, message: str):
    if not ok:
        raise ConfigInvalid(key, message)


def _choice(value, enum_cls, key):
    try:
        return enum_cls(value)
    except ValueError:
        raise ConfigInvalid(key, '{!r} is not one of {}'.format(value, ', '.join(e.value for e in enum_cls)))


def _ipv4(value, key) -> int:
    try:
        return int(ipaddress.IPv4Address(value))
    except (ipaddress.AddressValueError, ValueError):
        raise ConfigInvalid(key, 'not an IPv4 address: {!r}'.format(value))


@dataclass(frozen=True)
class RunSection:
    seed: int = 1
    duration_s: float = 10.0
    warmup_s: float = 1.0

    def validate(self):
        _require(self.duration_s > 0, 'run.duration_s', 'must be positive')
        _require(0 <= self.warmup_s < self.duration_s, 'run.warmup_s', 'must lie within [0, duration_s)')


@dataclass(frozen=True)
class EngineSection:
    enabled: bool = True
    strategy: str = Strategy.SYNCOOKIE.value
    data_delay_mode: str = DataDelayMode.ZERO_WINDOW.value
    shard_count: int = 1
    shard_key: Optional[str] = None
    batch_size: int = DEFAULT_BATCH_SIZE
    validate_checksums: bool = False
    mtu: int = DEFAULT_MTU
    default_window: int = DEFAULT_WINDOW_SIZE
    handshake_retries_s: Tuple[float, ...] = DEFAULT_HANDSHAKE_RETRIES

    def validate(self):
        _choice(self.strategy, Strategy, 'engine.strategy')
        _choice(self.data_delay_mode, DataDelayMode, 'engine.data_delay_mode')
        if self.shard_key is not None:
            _choice(self.shard_key, ShardKey, 'engine.shard_key')
        _require(self.shard_count >= 1, 'engine.shard_count', 'must be positive')
        _require(self.batch_size >= 1, 'engine.batch_size', 'must be positive')
        _require(74 <= self.mtu <= 65535, 'engine.mtu', 'must lie within [74, 65535]')
        _require(0 <= self.default_window <= 65535, 'engine.default_window', 'must fit 16 bits')
        _require(all(t > 0 for t in self.handshake_retries_s), 'engine.handshake_retries_s', 'must be positive')


@dataclass(frozen=True)
class CookieSection:
    key: Optional[str] = None
    seed: Optional[int] = None
    window: int = DEFAULT_WINDOW
    mss_table: Tuple[int, ...] = DEFAULT_MSS_TABLE

    def validate(self):
        if self.key is not None:
            try:
                CookieKey.from_hex(self.key)
            except ValueError as exc:
                raise ConfigInvalid('cookie.key', str(exc))
        _require(0 <= self.window <= 3, 'cookie.window', 'must be within 0..3')
        MssTable(self.mss_table)


@dataclass(frozen=True)
class WhitelistSection:
    granularity: str = Granularity.SOURCE_IP.value
    mask_bits: int = DEFAULT_MASK_BITS
    sweep_period_s: float = DEFAULT_SWEEP_PERIOD_S

    def validate(self):
        _choice(self.granularity, Granularity, 'whitelist.granularity')
        _require(2 <= self.mask_bits <= 32, 'whitelist.mask_bits', 'must be within 2..32')
        _require(self.sweep_period_s > 0, 'whitelist.sweep_period_s', 'must be positive')


@dataclass(frozen=True)
class ConnSection:
    swap_period_s: float = DEFAULT_SWAP_PERIOD_S
    capacity: int = DEFAULT_CAPACITY

    def validate(self):
        _require(self.swap_period_s > 0, 'conn.swap_period_s', 'must be positive')
        _require(self.capacity >= 1, 'conn.capacity', 'must be positive')


@dataclass(frozen=True)
class L2Section:
    client_mac: str = '02:00:00:00:00:01'
    proxy_client_mac: str = '02:00:00:00:01:01'
    server_mac: str = '02:00:00:00:00:02'
    proxy_server_mac: str = '02:00:00:00:01:02'

    def validate(self):
        for f in dataclasses.fields(self):
            try:
                mac_from_string(getattr(self, f.name))
            except ValueError as exc:
                raise ConfigInvalid('l2.' + f.name, str(exc))

    def table(self) -> L2Table:
        return L2Table(*(mac_from_string(getattr(self, f.name)) for f in dataclasses.fields(self)))


@dataclass(frozen=True)
class TopologySection:
    client_link_delay_us: int = 50
    server_link_delay_us: int = 50
    jitter_us: int = 0
    loss: float = 0.0
    server_ip: str = '10.0.1.1'
    server_port: int = 80

    def validate(self):
        _require(self.client_link_delay_us >= 0, 'topology.client_link_delay_us', 'must not be negative')
        _require(self.server_link_delay_us >= 0, 'topology.server_link_delay_us', 'must not be negative')
        _require(0 <= self.jitter_us <= min(self.client_link_delay_us, self.server_link_delay_us),
                 'topology.jitter_us', 'must lie within [0, smallest link delay]')
        _require(0.0 <= self.loss <= 1.0, 'topology.loss', 'must lie within [0, 1]')
        _ipv4(self.server_ip, 'topology.server_ip')
        _require(0 < self.server_port < 65536, 'topology.server_port', 'not a port')


@dataclass(frozen=True)
class ClientsSection:
    source_ip: str = '10.0.0.1'
    source_count: int = 1
    parallel_connections: int = 100
    request_rate: float = 100.0
    request_size: int = 100
    response_size: int = 1024
    connection_mode: str = 'persistent'
    request_timeout_s: float = 1.0
    data_retransmit_timeout_ms: float = 200.0
    syn_retransmit_schedule_s: Tuple[float, ...] = (1.0, 2.0, 4.0)
    app_retry_on_rst: bool = True
    rst_retry_port: str = 'new'
    arrival: str = 'constant'
    mss: int = 1460
    window: int = 65535

    def validate(self):
        _ipv4(self.source_ip, 'clients.source_ip')
        _require(self.source_count >= 1, 'clients.source_count', 'must be positive')
        _require(0 <= self.parallel_connections <= 50000, 'clients.parallel_connections', 'must be within 0..50000')
        _require(self.request_rate >= 0, 'clients.request_rate', 'must not be negative')
        _require(self.request_size >= 1, 'clients.request_size', 'must be positive')
        _require(self.response_size >= 1, 'clients.response_size', 'must be positive')
        _require(self.arrival in ('constant', 'poisson'), 'clients.arrival', "must be 'constant' or 'poisson'")
        _require(self.connection_mode in ('persistent', 'per-request'), 'clients.connection_mode',
                 "must be 'persistent' or 'per-request'")
        _require(self.rst_retry_port in ('new', 'same'), 'clients.rst_retry_port', "must be 'new' or 'same'")
        _require(self.request_timeout_s > 0, 'clients.request_timeout_s', 'must be positive')
        _require(self.data_retransmit_timeout_ms > 0, 'clients.data_retransmit_timeout_ms', 'must be positive')
        _require(all(t > 0 for t in self.syn_retransmit_schedule_s), 'clients.syn_retransmit_schedule_s',
                 'must be positive')
        _require(536 <= self.mss <= 65495, 'clients.mss', 'must lie within [536, 65495]')
        _require(1 <= self.window <= 65535, 'clients.window', 'must fit 16 bits')


@dataclass(frozen=True)
class AttackerSection:
    syn_flood_rate: float = 0.0
    ack_flood_rate: float = 0.0
    rst_flood_rate: float = 0.0
    spoof_ip_base: str = '100.64.0.0'
    spoof_ip_count: int = 1 << 16
    spoof_port_min: int = 1024
    spoof_port_max: int = 65535
    arrival: str = 'constant'
    start_s: float = 0.0

    def validate(self):
        for name in ('syn_flood_rate', 'ack_flood_rate', 'rst_flood_rate'):
            _require(getattr(self, name) >= 0, 'attacker.' + name, 'must not be negative')
        _ipv4(self.spoof_ip_base, 'attacker.spoof_ip_base')
        _require(self.spoof_ip_count >= 1, 'attacker.spoof_ip_count', 'must be positive')
        _require(0 < self.spoof_port_min <= self.spoof_port_max < 65536, 'attacker.spoof_port_min',
                 'port range must satisfy 0 < min <= max < 65536')
        _require(self.arrival in ('constant', 'poisson'), 'attacker.arrival', "must be 'constant' or 'poisson'")
        _require(self.start_s >= 0, 'attacker.start_s', 'must not be negative')


@dataclass(frozen=True)
class ServerSection:
    backlog_capacity: int = 256
    backlog_policy: str = 'drop-new'
    synack_retries: int = 5
    synack_initial_timeout_s: float = 1.0
    service_time_us: int = 100
    syncookies: bool = False
    mss: int = 1460
    window: int = 65535

    def validate(self):
        _require(self.backlog_capacity >= 1, 'server.backlog_capacity', 'must be positive')
        _require(self.backlog_policy in ('drop-new', 'evict-oldest'), 'server.backlog_policy',
                 "must be 'drop-new' or 'evict-oldest'")
        _require(self.synack_retries >= 0, 'server.synack_retries', 'must not be negative')
        _require(self.synack_initial_timeout_s > 0, 'server.synack_initial_timeout_s', 'must be positive')
        _require(self.service_time_us >= 0, 'server.service_time_us', 'must not be negative')
        _require(536 <= self.mss <= 65495, 'server.mss', 'must lie within [536, 65495]')
        _require(1 <= self.window <= 65535, 'server.window', 'must fit 16 bits')


@dataclass(frozen=True)
class EngineCapacitySection:
    ops_per_second: float = 0.0

    def validate(self):
        _require(self.ops_per_second >= 0, 'engine_capacity.ops_per_second', 'must not be negative (0: unlimited)')


_SECTIONS = {
    'run': RunSection,
    'engine': EngineSection,
    'cookie': CookieSection,
    'whitelist': WhitelistSection,
    'conn': ConnSection,
    'l2': L2Section,
    'topology': TopologySection,
    'clients': ClientsSection,
    'attacker': AttackerSection,
    'server': ServerSection,
    'engine_capacity': EngineCapacitySection,
}


@dataclass(frozen=True)
class ScenarioConfig:
    run: RunSection = field(default_factory=RunSection)
    engine: EngineSection = field(default_factory=EngineSection)
    cookie: CookieSection = field(default_factory=CookieSection)
    whitelist: WhitelistSection = field(default_factory=WhitelistSection)
    conn: ConnSection = field(default_factory=ConnSection)
    l2: L2Section = field(default_factory=L2Section)
    topology: TopologySection = field(default_factory=TopologySection)
    clients: ClientsSection = field(default_factory=ClientsSection)
    attacker: AttackerSection = field(default_factory=AttackerSection)
    server: ServerSection = field(default_factory=ServerSection)
    engine_capacity: EngineCapacitySection = field(default_factory=EngineCapacitySection)

    def validate(self) -> 'ScenarioConfig':
        for name in _SECTIONS:
            getattr(self, name).validate()
        strategy = self.strategy_config()
        # a per-flow whitelist only ever admits the reset tuple
        _require(not (self.engine.enabled and strategy.is_auth and strategy.whitelist_granularity is Granularity.FLOW
                      and self.clients.app_retry_on_rst and self.clients.rst_retry_port == 'new'),
                 'clients.rst_retry_port', "must be 'same' with per-flow whitelisting")
        return self

    def strategy_config(self) -> StrategyConfig:
        return StrategyConfig(strategy=self.engine.strategy, data_delay_mode=self.engine.data_delay_mode,
                              cookie_window=self.cookie.window, shard_count=self.engine.shard_count,
                              shard_key=self.engine.shard_key, whitelist_granularity=self.whitelist.granularity)

    def cookie_key(self, fallback_seed: Optional[int] = None) -> CookieKey:
        """Explicit hex key, else a key derived from `cookie.seed`, else from `fallback_seed`."""
        if self.cookie.key is not None:
            return CookieKey.from_hex(self.cookie.key)
        seed = self.cookie.seed if self.cookie.seed is not None else fallback_seed
        if seed is None:
            logger.warning('no cookie key or seed configured, drawing a key from OS entropy')
            return CookieKey.generate()
        return CookieKey.from_seed(seed)

    def build_engine(self, key: CookieKey) -> ShardedEngine:
        return ShardedEngine.build(
            self.strategy_config(), key,
            mss_table=MssTable(self.cookie.mss_table),
            mask_bits=self.whitelist.mask_bits,
            capacity=self.conn.capacity,
            l2=self.l2.table(),
            default_window=self.engine.default_window,
            validate_checksums=self.engine.validate_checksums,
            swap_period_s=self.conn.swap_period_s,
            sweep_period_s=self.whitelist.sweep_period_s,
            handshake_retries=self.engine.handshake_retries_s,
        )

    def replace(self, **sections) -> 'ScenarioConfig':
        """Copy with keys of single sections changed: cfg.replace(engine={'strategy': 'auth-full'})."""
        data = self.to_dict()
        for name, values in sections.items():
            data.setdefault(name, {}).update(values)
        return config_from_dict(data)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}


def _coerce(section: str, f: dataclasses.Field, value):
    key = '{}.{}'.format(section, f.name)
    default = f.default
    if isinstance(default, bool):
        _require(isinstance(value, bool), key, 'expected true or false, got {!r}'.format(value))
        return value
    if isinstance(default, tuple):
        _require(isinstance(value, (list, tuple)), key, 'expected a list, got {!r}'.format(value))
        return tuple(value)
    if isinstance(default, float):
        _require(isinstance(value, (int, float)) and not isinstance(value, bool), key,
                 'expected a number, got {!r}'.format(value))
        return float(value)
    if isinstance(default, int):
        _require(isinstance(value, int) and not isinstance(value, bool), key,
                 'expected an integer, got {!r}'.format(value))
        return value
    if isinstance(default, str):
        _require(isinstance(value, str), key, 'expected a string, got {!r}'.format(value))
        return value
    return value


def config_from_dict(data: Mapping[str, Mapping[str, Any]]) -> ScenarioConfig:
    sections = {}
    for name, values in data.items():
        if name not in _SECTIONS:
            raise ConfigInvalid(name, 'unknown section')
        if not isinstance(values, Mapping):
            raise ConfigInvalid(name, 'expected a table')
        cls = _SECTIONS[name]
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for k, v in values.items():
            if k not in fields:
                raise ConfigInvalid('{}.{}'.format(name, k), 'unknown key')
            kwargs[k] = _coerce(name, fields[k], v)
        sections[name] = cls(**kwargs)
    return ScenarioConfig(**sections).validate()


def parse_override(text: str) -> Tuple[str, str, Any]:
    """Split 'section.key=value'; the value is read as a TOML literal, or taken as a bare string."""
    if '=' not in text:
        raise ConfigInvalid(text, "override must look like section.key=value")
    dotted, raw = text.split('=', 1)
    dotted = dotted.strip()
    if dotted.count('.') != 1:
        raise ConfigInvalid(dotted, 'override key must be section.key')
    section, key = dotted.split('.')
    try:
        value = tomllib.loads('v = ' + raw)['v']
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


def apply_overrides(data: Dict[str, Dict[str, Any]], overrides: Iterable[str]) -> Dict[str, Dict[str, Any]]:
    for text in overrides:
        section, key, value = parse_override(text)
        data.setdefault(section, {})[key] = value
    return data


def load_config(path=None, overrides: Iterable[str] = ()) -> ScenarioConfig:
    """
    Read a TOML scenario file and apply `section.key=value` overrides.

    Parameters
    ----------
    path: str or os.PathLike, optional
        without a path only defaults and overrides apply
    overrides: iterable of str

    Returns
    -------
    ScenarioConfig

    Raises
    ------
    ConfigInvalid
        unreadable TOML, unknown keys or values out of range
    """
    data: Dict[str, Dict[str, Any]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigInvalid(str(path), 'config file not found')
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigInvalid(str(path), 'not valid TOML: {}'.format(exc))
    apply_overrides(data, overrides)
    cfg = config_from_dict(data)
    logger.debug('loaded config from %s', path or '<defaults>')
    return cfg


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. 'quickstart'."""
    return CONFIG_DIR / '{}.toml'.format(name)
