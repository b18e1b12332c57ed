"""
Byzantine behaviour schedules and message interception
"""
import hashlib
import logging
import random
from dataclasses import replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..crdt.operation import INT64_MAX, Operation
from ..crypto.identity import Signer
from ..protocol.frames import CommitRequest, EndorsementResponse, Frame, GossipPush, ProposeRequest
from ..protocol.messages import Endorsement, write_set_bytes

logger = logging.getLogger(__name__)


class Behavior(str, Enum):
    DROP_PROPOSALS = "DropProposals"
    DROP_COMMITS = "DropCommits"
    CORRUPT_ENDORSEMENTS = "CorruptEndorsements"
    SUPPRESS_GOSSIP = "SuppressGossip"


class ByzantineWindow(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    start: float = Field(..., ge=0)
    end: float
    behaviors: Tuple[Behavior, ...]

    @model_validator(mode="after")
    def _ordered(self):
        if self.end <= self.start:
            raise ValueError(f"Window end {self.end} must follow its start {self.start}")
        return self


class ByzantineSchedule(BaseModel):
    """Per-organization windows of misbehaviour, in simulated seconds"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    windows: Dict[str, Tuple[ByzantineWindow, ...]] = Field(default_factory=dict)
    activation_probability: float = Field(0.5, ge=0, le=1)

    def active(self, org_id: str, now: float) -> Set[Behavior]:
        behaviors: Set[Behavior] = set()
        for window in self.windows.get(org_id, ()):
            if window.start <= now < window.end:
                behaviors.update(window.behaviors)
        return behaviors

    def byzantine_orgs(self) -> List[str]:
        return sorted(org for org, windows in self.windows.items() if windows)

    def check_horizon(self, horizon: float) -> None:
        for org, windows in self.windows.items():
            for window in windows:
                if window.end > horizon:
                    raise ValueError(f"Window of {org} ends at {window.end}s, after the {horizon}s horizon")

    @staticmethod
    def always(org_ids: Sequence[str], behaviors: Sequence[Behavior], horizon: float = 1e9,
               activation_probability: float = 1.0) -> "ByzantineSchedule":
        window = ByzantineWindow(start=0, end=horizon, behaviors=tuple(behaviors))
        return ByzantineSchedule(
            windows={org: (window,) for org in org_ids},
            activation_probability=activation_probability,
        )


def _salt(org_id: str) -> int:
    return int.from_bytes(hashlib.sha256(org_id.encode("utf-8")).digest()[:2], "big") + 1


def corrupt_operation(op: Operation, org_id: str) -> Operation:
    """Change an operation's value in a way specific to the corrupting organization"""
    value = op.value
    if isinstance(value, int):
        salt = _salt(org_id)
        value = value + salt if value <= INT64_MAX - salt else value - salt
    elif isinstance(value, bytes):
        value = value + b"\x00" + org_id.encode("utf-8")
    else:
        value = org_id.encode("utf-8")
    return replace(op, value=value)


def corrupt_write_set(write_set: Sequence[Operation], org_id: str) -> Tuple[Operation, ...]:
    if not write_set:
        return ()
    return (corrupt_operation(write_set[0], org_id),) + tuple(write_set[1:])


def corrupt_endorsement(endorsement: Endorsement, signer: Signer, salt: Optional[str] = None) -> Endorsement:
    """
    Corrupt the write-set, then sign it so the endorsement itself verifies

    Colluding organizations pass a shared ``salt`` so their corruptions agree.
    """
    write_set = corrupt_write_set(endorsement.write_set, salt or signer.id)
    digest, signature = signer.sign(write_set_bytes(write_set))
    return Endorsement(signer.id, write_set, digest, signature)


def intercept(frame: Frame, src: str, dst: str, schedule: ByzantineSchedule, now: float,
              rng: random.Random, signers: Mapping[str, Signer]) -> Optional[Frame]:
    """
    Apply the active behaviours of the sending or receiving organization

    Returns:
        The frame to forward (possibly corrupted) or None when dropped
    """
    def fires() -> bool:
        return rng.random() < schedule.activation_probability

    if isinstance(frame, ProposeRequest):
        if Behavior.DROP_PROPOSALS in schedule.active(dst, now) and fires():
            logger.debug(f"{dst} drops proposal {frame.proposal.proposal_id}")
            return None
    elif isinstance(frame, CommitRequest):
        if Behavior.DROP_COMMITS in schedule.active(dst, now) and fires():
            logger.debug(f"{dst} drops transaction {frame.transaction.tx_id[:12]}")
            return None
    elif isinstance(frame, GossipPush):
        if Behavior.SUPPRESS_GOSSIP in schedule.active(src, now) and fires():
            return None
    elif isinstance(frame, EndorsementResponse) and frame.endorsement is not None:
        if Behavior.CORRUPT_ENDORSEMENTS in schedule.active(src, now) and fires():
            logger.debug(f"{src} corrupts its endorsement for {frame.request_id}")
            return replace(frame, endorsement=corrupt_endorsement(frame.endorsement, signers[src]))
    return frame
