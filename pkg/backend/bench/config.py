"""
Workload configuration for benchmark experiments
"""
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..contracts.synthetic import parse_crdt_type
from ..crdt.operation import CrdtType
from ..network.byzantine import ByzantineSchedule
from ..network.links import LinkModel
from ..protocol.messages import EndorsementPolicy
from ..settings import ConfigError

logger = logging.getLogger(__name__)


class Application(str, Enum):
    SYNTHETIC = "Synthetic"
    VOTING = "Voting"
    AUCTION = "Auction"


class WorkloadConfig(BaseModel):
    """
    Control variables of one experiment

    Defaults are desk-scale: a tenth of the rate and half the roster of the
    full-size configuration, all reachable by overriding fields.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "default"
    application: Application = Application.SYNTHETIC
    arrival_rate: float = Field(300.0, gt=0, description="Transactions per second")
    duration: float = Field(18.0, ge=0, description="Seconds of arrivals")
    drain: float = Field(15.0, ge=0, description="Seconds simulated after the last arrival")
    read_percent: int = Field(50, ge=0, le=100)
    modify_percent: int = Field(50, ge=0, le=100)
    num_orgs: int = Field(8, ge=1)
    policy_q: int = Field(4, ge=1)
    num_clients: int = Field(100, ge=1)
    gossip_ratio: int = Field(1, ge=0)
    gossip_interval: float = Field(1.0, gt=0)
    link: LinkModel = Field(default_factory=LinkModel)
    byzantine: Optional[ByzantineSchedule] = None
    seed: int = Field(0, ge=0)

    obj_count: int = Field(1, ge=1)
    ops_per_obj: int = Field(1, ge=1)
    crdt_type: CrdtType = CrdtType.G_COUNTER
    object_universe: int = Field(1024, ge=1)

    elections: int = Field(8, ge=1)
    parties: int = Field(8, ge=1)
    voters: int = Field(1000, ge=1)
    auctions: int = Field(8, ge=1)
    bidders: int = Field(1000, ge=1)
    max_bid_increase: int = Field(100, ge=1)

    endorse_timeout: float = Field(5.0, gt=0)
    receipt_timeout: float = Field(10.0, gt=0)
    service_endorse_ms: float = Field(0.8, ge=0)
    service_commit_ms: float = Field(0.8, ge=0)
    service_read_ms: float = Field(0.3, ge=0)

    client_avoidance: bool = True
    shared_suspicion: bool = True
    suspicion_threshold: int = Field(3, ge=1)
    suspicion_decay: float = Field(0.5, ge=0)
    suspicion_forgiveness: float = Field(0.01, ge=0)
    max_attempts: int = Field(16, ge=1)
    cache_capacity: Optional[int] = Field(None, ge=1)

    @field_validator("crdt_type", mode="before")
    @classmethod
    def _crdt_alias(cls, value):
        return parse_crdt_type(value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def _consistent(self):
        if self.read_percent + self.modify_percent != 100:
            raise ValueError(f"Read/modify mix must sum to 100, got {self.read_percent}/{self.modify_percent}")
        if self.policy_q > self.num_orgs:
            raise ValueError(f"Policy q={self.policy_q} exceeds {self.num_orgs} organizations")
        if self.gossip_ratio > max(0, self.num_orgs - 1):
            raise ValueError(f"Gossip ratio {self.gossip_ratio} exceeds {self.num_orgs - 1} peers")
        if self.obj_count > self.object_universe:
            raise ValueError(f"obj_count {self.obj_count} exceeds the object universe {self.object_universe}")
        if self.byzantine is not None:
            unknown = set(self.byzantine.byzantine_orgs()) - set(self.org_ids)
            if unknown:
                raise ValueError(f"Byzantine schedule names unknown organizations {sorted(unknown)}")
            self.byzantine.check_horizon(self.horizon)
        return self

    @property
    def policy(self) -> EndorsementPolicy:
        return EndorsementPolicy(self.policy_q, self.num_orgs)

    @property
    def horizon(self) -> float:
        return self.duration + self.drain

    @property
    def org_ids(self) -> List[str]:
        return [f"org-{i:02d}" for i in range(1, self.num_orgs + 1)]

    @property
    def client_ids(self) -> List[str]:
        return [f"client-{i:04d}" for i in range(self.num_clients)]


def parse_workload(data: Dict[str, Any], base_dir: Optional[Path] = None) -> WorkloadConfig:
    """
    Validate one workload dictionary

    A ``byzantine_file`` entry is loaded relative to ``base_dir``.

    Raises:
        ConfigError: If the data does not describe a valid workload
    """
    data = dict(data)
    schedule_file = data.pop("byzantine_file", None)
    if schedule_file is not None:
        path = Path(schedule_file)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            with open(path, "r", encoding="utf-8") as f:
                data["byzantine"] = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read Byzantine schedule {path}: {e}") from e
    try:
        return WorkloadConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid workload configuration: {e}") from e


def load_workloads(path: Union[str, Path]) -> List[WorkloadConfig]:
    """
    Load a workload file

    The file holds either one workload object or
    ``{"defaults": {...}, "configs": [{...}, ...]}`` for sweeps.

    Raises:
        ConfigError: If the file is missing or invalid
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read workload file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Workload file {path} must hold a JSON object")

    if "configs" in data:
        defaults = data.get("defaults", {})
        configs = [parse_workload({**defaults, **entry}, path.parent) for entry in data["configs"]]
    else:
        configs = [parse_workload(data, path.parent)]
    logger.info(f"Loaded {len(configs)} workload configuration(s) from {path}")
    return configs
