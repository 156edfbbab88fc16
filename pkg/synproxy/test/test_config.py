import unittest

import pytest

from synproxy.config import (ScenarioConfig, bundled_config, config_from_dict, load_config, parse_override)
from synproxy.cookie import CookieKey
from synproxy.engine import ShardKey, Strategy
from synproxy.errors import ConfigInvalid


def test_defaults():
    cfg = load_config()
    assert cfg.engine.strategy == 'syncookie'
    assert cfg.server.backlog_capacity == 256
    assert cfg.clients.data_retransmit_timeout_ms == 200.0
    assert cfg.strategy_config().shard_key is ShardKey.FOUR_TUPLE


@pytest.mark.parametrize('name', ['quickstart', 'no-proxy', 'overload'])
def test_bundled_configs_load(name):
    cfg = load_config(bundled_config(name))
    assert isinstance(cfg, ScenarioConfig)


def test_file_and_overrides(tmp_path):
    path = tmp_path / 'c.toml'
    path.write_text('[engine]\nstrategy = "auth-full"\n\n[attacker]\nsyn_flood_rate = 10.0\n')
    cfg = load_config(path, ['attacker.syn_flood_rate=250', 'clients.arrival=poisson',
                             'engine.handshake_retries_s=[0.5, 1.0]'])
    assert cfg.strategy_config().strategy is Strategy.AUTH_FULL
    assert cfg.attacker.syn_flood_rate == 250.0
    assert cfg.clients.arrival == 'poisson'
    assert cfg.engine.handshake_retries_s == (0.5, 1.0)


def test_parse_override():
    assert parse_override('a.b=3') == ('a', 'b', 3)
    assert parse_override('a.b=true') == ('a', 'b', True)
    assert parse_override('a.b=auth-full') == ('a', 'b', 'auth-full')
    assert parse_override('a.b="x y"') == ('a', 'b', 'x y')
    with pytest.raises(ConfigInvalid):
        parse_override('novalue')
    with pytest.raises(ConfigInvalid):
        parse_override('a.b.c=1')


class InvalidConfigTestCase(unittest.TestCase):

    def assertInvalid(self, data, key):
        with self.assertRaises(ConfigInvalid) as ctx:
            config_from_dict(data)
        self.assertEqual(ctx.exception.key, key)

    def test_unknown_section_and_key(self):
        self.assertInvalid({'nope': {}}, 'nope')
        self.assertInvalid({'engine': {'colour': 'red'}}, 'engine.colour')

    def test_types(self):
        self.assertInvalid({'engine': {'shard_count': 'two'}}, 'engine.shard_count')
        self.assertInvalid({'engine': {'enabled': 1}}, 'engine.enabled')

    def test_ranges(self):
        self.assertInvalid({'whitelist': {'mask_bits': 40}}, 'whitelist.mask_bits')
        self.assertInvalid({'cookie': {'window': 5}}, 'cookie.window')
        self.assertInvalid({'topology': {'loss': 1.5}}, 'topology.loss')
        self.assertInvalid({'attacker': {'syn_flood_rate': -1.0}}, 'attacker.syn_flood_rate')
        self.assertInvalid({'server': {'backlog_policy': 'random'}}, 'server.backlog_policy')
        self.assertInvalid({'cookie': {'key': 'abcd'}}, 'cookie.key')
        self.assertInvalid({'cookie': {'mss_table': [536]}}, 'cookie.mss_table')
        self.assertInvalid({'engine': {'strategy': 'syncookie', 'shard_key': 'source-ip'}}, 'engine.shard_key')
        self.assertInvalid({'clients': {'rst_retry_port': 'random'}}, 'clients.rst_retry_port')

    def test_flow_whitelist_needs_retry_on_same_tuple(self):
        flow = {'engine': {'strategy': 'auth-full'}, 'whitelist': {'granularity': 'flow'}}
        self.assertInvalid(flow, 'clients.rst_retry_port')
        config_from_dict(dict(flow, clients={'rst_retry_port': 'same'}))
        config_from_dict(dict(flow, clients={'app_retry_on_rst': False}))
        config_from_dict(dict(flow, engine={'strategy': 'syncookie'}))

    def test_missing_file(self):
        with self.assertRaises(ConfigInvalid):
            load_config('/nonexistent/scenario.toml')


def test_cookie_key_sources():
    cfg = load_config(overrides=['cookie.key="000102030405060708090a0b0c0d0e0f"'])
    assert cfg.cookie_key() == CookieKey.from_hex('000102030405060708090a0b0c0d0e0f')
    assert load_config(overrides=['cookie.seed=5']).cookie_key() == CookieKey.from_seed(5)
    assert load_config().cookie_key(fallback_seed=9) == CookieKey.from_seed(9)


def test_replace_and_build_engine():
    cfg = load_config().replace(engine={'strategy': 'auth-cookie', 'shard_count': 2})
    engine = cfg.build_engine(CookieKey.from_seed(1))
    assert len(engine.shards) == 2
    assert all(shard.whitelist is not None for shard in engine.shards)
    assert cfg.to_dict()['engine']['shard_count'] == 2
