"""
Process settings read from the environment (and a .env file)
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Configuration file or environment value is invalid"""


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    try:
        return float(value) if value not in (None, "") else default
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {value!r}") from None


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    try:
        return int(value) if value not in (None, "") else default
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None


@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    node_id: str = "org-01"
    node_key_hex: Optional[str] = None
    genesis_path: str = "config/genesis.json"
    peers: Dict[str, str] = field(default_factory=dict)
    policy_q: int = 2
    policy_n: int = 4
    gossip_interval: float = 1.0
    gossip_ratio: int = 1
    ledger_dir: str = "data/ledger"
    api_host: str = "0.0.0.0"
    api_port: int = 8000
    endorse_timeout: float = 5.0
    receipt_timeout: float = 10.0
    genesis_seed: int = 0

    @staticmethod
    def from_env() -> "Settings":
        """
        Build settings from environment variables

        Raises:
            ConfigError: If a variable cannot be parsed
        """
        peers_raw = os.getenv("PEERS", "{}")
        try:
            peers = json.loads(peers_raw)
        except json.JSONDecodeError as e:
            raise ConfigError(f"PEERS must be a JSON object of org id to URL: {e}") from e
        if not isinstance(peers, dict):
            raise ConfigError("PEERS must be a JSON object of org id to URL")
        node_id = os.getenv("NODE_ID", "org-01")
        return Settings(
            log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
            node_id=node_id,
            node_key_hex=os.getenv("NODE_KEY_HEX") or None,
            genesis_path=os.getenv("GENESIS_PATH", "config/genesis.json"),
            peers={str(k): str(v) for k, v in peers.items()},
            policy_q=_env_int("POLICY_Q", 2),
            policy_n=_env_int("POLICY_N", 4),
            gossip_interval=_env_float("GOSSIP_INTERVAL", 1.0),
            gossip_ratio=_env_int("GOSSIP_RATIO", 1),
            ledger_dir=os.getenv("LEDGER_DIR", f"data/ledger/{node_id}"),
            api_host=os.getenv("API_HOST", "0.0.0.0"),
            api_port=_env_int("API_PORT", 8000),
            endorse_timeout=_env_float("ENDORSE_TIMEOUT", 5.0),
            receipt_timeout=_env_float("RECEIPT_TIMEOUT", 10.0),
            genesis_seed=_env_int("GENESIS_SEED", 0),
        )


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or os.getenv("LOG_LEVEL", "INFO")).upper(), logging.INFO),
        format='%(asctime)s | %(levelname)s | %(message)s'
    )
