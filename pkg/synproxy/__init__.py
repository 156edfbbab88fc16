from .cookie import CookieCodec, CookieKey, encode_cookie, verify_cookie
from .engine import ProxyEngine, ShardedEngine, Strategy, StrategyConfig
from .config import load_config, bundled_config
