"""
Client session driving the execute-commit lifecycle

The protocol logic is written as generators that yield ``Broadcast``
requests and receive the responses that arrived before the timeout, so the
same steps run over the simulator and over HTTP.
"""
import hashlib
import json
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Generator, Iterable, List, Optional, Protocol, Sequence, Set, Tuple, Union

from ..crdt.clock import LamportClock
from ..crypto.identity import IdentityRegistry, Signer
from ..protocol.frames import (
    CommitRequest,
    EndorsementResponse,
    Frame,
    ProposeRequest,
    ReadRequest,
    ReadResponse,
    ReceiptResponse,
)
from ..protocol.messages import (
    Endorsement,
    EndorsementPolicy,
    Proposal,
    ReasonCode,
    Receipt,
    Transaction,
    Verdict,
    transaction_id,
    write_set_bytes,
)

logger = logging.getLogger(__name__)


class ClientError(RuntimeError):
    """Base class for client-side errors"""


class Exhausted(ClientError):
    """Fewer than q organizations remain unsuspected"""


class FailureReason(str, Enum):
    ENDORSEMENT_MISMATCH = "EndorsementMismatch"
    TIMEOUT = "Timeout"
    REJECTED = "Rejected"


RETRYABLE = {FailureReason.ENDORSEMENT_MISMATCH, FailureReason.TIMEOUT}


@dataclass(frozen=True)
class Broadcast:
    """Request frames for several organizations, awaited up to ``timeout`` seconds"""

    phase: str
    frames: Dict[str, Frame]
    timeout: float


@dataclass(frozen=True)
class Committed:
    tx_id: str
    receipts: Tuple[Receipt, ...]
    attempts: int = 1


@dataclass(frozen=True)
class Failed:
    reason: FailureReason
    proposal: Proposal
    implicated: Tuple[str, ...] = ()
    detail: str = ""
    transaction: Optional[Transaction] = None
    receipts: Tuple[Receipt, ...] = ()
    reason_codes: Tuple[ReasonCode, ...] = ()
    attempts: int = 1


@dataclass(frozen=True)
class ReadValue:
    org_id: str
    value: object
    error: str = ""


Outcome = Union[Committed, Failed]
Steps = Generator[Broadcast, Dict[str, Frame], object]


class Transport(Protocol):
    def broadcast(self, frames: Dict[str, Frame], timeout: float) -> Dict[str, Frame]:
        ...


def run_steps(steps: Steps, transport: Transport):
    """Drive session steps over a blocking transport"""
    try:
        request = next(steps)
        while True:
            request = steps.send(transport.broadcast(request.frames, request.timeout))
    except StopIteration as stop:
        return stop.value


def implicated_by_mismatch(endorsements: Dict[str, Endorsement]) -> Tuple[str, ...]:
    """
    Organizations outside the unique largest group of identical write-sets

    When several groups tie for largest, every endorser is implicated.
    """
    groups: Dict[bytes, List[str]] = defaultdict(list)
    for org_id, endorsement in endorsements.items():
        groups[endorsement.write_set_digest].append(org_id)
    largest = max(len(g) for g in groups.values())
    winners = [d for d, g in groups.items() if len(g) == largest]
    if len(winners) > 1:
        return tuple(sorted(endorsements))
    return tuple(sorted(o for d, g in groups.items() if d != winners[0] for o in g))


class ClientSession:
    """
    One client's view of the network

    Clock values are assigned when proposals are created, so they strictly
    increase even with several submissions in flight.
    """

    def __init__(self, signer: Signer, registry: IdentityRegistry, org_roster: Sequence[str],
                 policy: EndorsementPolicy, rng: Optional[random.Random] = None,
                 endorse_timeout: float = 5.0, receipt_timeout: float = 10.0,
                 suspicion: Optional[Counter] = None, suspicion_threshold: int = 3,
                 max_attempts: int = 16, avoidance: bool = True, suspicion_decay: float = 0.5,
                 suspicion_forgiveness: float = 0.01):
        """
        Initialize a client session

        Args:
            signer: Signing context of the client
            registry: Network roster used to verify endorsements and receipts
            org_roster: Organizations the client may contact
            policy: Endorsement policy of the network
            rng: Randomness for target selection
            endorse_timeout: Seconds to wait for endorsements
            receipt_timeout: Seconds to wait for receipts
            suspicion: Failure counters, possibly shared by several sessions
            suspicion_threshold: Count at which an organization is avoided
            max_attempts: Attempts per logical submission in avoid_and_retry
            avoidance: Whether failures raise suspicion at all
            suspicion_decay: Suspicion removed from an organization by each correct answer
            suspicion_forgiveness: Suspicion removed from every organization per committed submission
        """
        if len(org_roster) < policy.q:
            raise ClientError(f"Roster of {len(org_roster)} organizations cannot satisfy {policy}")
        self.signer = signer
        self.registry = registry
        self.org_roster = sorted(org_roster)
        self.policy = policy
        self.rng = rng or random.Random(signer.id)
        self.endorse_timeout = endorse_timeout
        self.receipt_timeout = receipt_timeout
        self.suspicion: Counter = suspicion if suspicion is not None else Counter()
        self.suspicion_threshold = suspicion_threshold
        self.max_attempts = max_attempts
        self.avoidance = avoidance
        self.suspicion_decay = suspicion_decay
        self.suspicion_forgiveness = suspicion_forgiveness
        self.clock = LamportClock()
        self._requests = 0

    @property
    def client_id(self) -> str:
        return self.signer.id

    def new_proposal(self, contract_id: str, function_name: str, args: Iterable[bytes]) -> Proposal:
        clock = self.clock.tick()
        unsigned = Proposal(f"{self.client_id}:{clock}", self.client_id, clock,
                            contract_id, function_name, tuple(args))
        _, signature = self.registry.hash_and_sign(self.signer, unsigned.signing_bytes)
        return replace(unsigned, client_signature=signature)

    def _request_id(self, proposal: Proposal, phase: str) -> str:
        self._requests += 1
        return f"{proposal.proposal_id}/{phase}/{self._requests}"

    # Target selection

    def available_orgs(self) -> List[str]:
        return [o for o in self.org_roster if self.suspicion[o] < self.suspicion_threshold]

    def select_targets(self, count: Optional[int] = None, exclude: Iterable[str] = ()) -> List[str]:
        """
        Pick the least-suspected organizations, breaking ties at random

        Raises:
            Exhausted: If too few unsuspected organizations remain
        """
        count = self.policy.q if count is None else count
        excluded = set(exclude)
        candidates = [o for o in self.available_orgs() if o not in excluded]
        if len(candidates) < count:
            raise Exhausted(
                f"{self.client_id}: {len(candidates)} unsuspected organizations left, {count} needed"
            )
        keyed = [(self.suspicion[o], self.rng.random(), o) for o in candidates]
        return [o for _, _, o in sorted(keyed)[:count]]

    def suspect(self, org_ids: Iterable[str]) -> None:
        if not self.avoidance:
            return
        for org_id in org_ids:
            self.suspicion[org_id] += 1
            logger.warning(f"{self.client_id} suspects {org_id} ({self.suspicion[org_id]:g})")

    def absolve(self, org_ids: Iterable[str], amount: Optional[float] = None) -> None:
        """Lower the suspicion of organizations that answered correctly"""
        amount = self.suspicion_decay if amount is None else amount
        if amount <= 0:
            return
        for org_id in org_ids:
            count = self.suspicion.get(org_id, 0)
            if count <= amount:
                self.suspicion.pop(org_id, None)
            else:
                self.suspicion[org_id] = count - amount

    def _forgive(self) -> None:
        # Avoided organizations receive no requests, so only commits elsewhere bring them back
        self.absolve(list(self.suspicion), self.suspicion_forgiveness)

    # Protocol steps

    def _endorsement_valid(self, org_id: str, endorsement: Endorsement) -> bool:
        if endorsement.org_id != org_id:
            return False
        if hashlib.sha256(write_set_bytes(endorsement.write_set)).digest() != endorsement.write_set_digest:
            return False
        return self.registry.verify_digest(org_id, endorsement.write_set_digest, endorsement.org_signature)

    def submit_steps(self, contract_id: str, function_name: str, args: Iterable[bytes]) -> Steps:
        """Steps of one submission attempt; returns Committed or Failed"""
        proposal = self.new_proposal(contract_id, function_name, args)
        return (yield from self._attempt(proposal))

    def _attempt(self, proposal: Proposal) -> Steps:
        targets = self.select_targets()
        request_id = self._request_id(proposal, "endorse")
        responses = yield Broadcast(
            "endorse", {org: ProposeRequest(request_id, proposal) for org in targets}, self.endorse_timeout
        )

        endorsements: Dict[str, Endorsement] = {}
        errors: Dict[str, str] = {}
        forged: Set[str] = set()
        for org in targets:
            response = responses.get(org)
            if not isinstance(response, EndorsementResponse):
                continue
            if response.error:
                errors[org] = response.error
            elif response.endorsement is not None:
                if self._endorsement_valid(org, response.endorsement):
                    endorsements[org] = response.endorsement
                else:
                    forged.add(org)

        if errors:
            detail = sorted(set(errors.values()))[0]
            return Failed(FailureReason.REJECTED, proposal, detail=detail)
        if forged or len({e.write_set_digest for e in endorsements.values()}) > 1:
            implicated = set(forged)
            if endorsements:
                implicated.update(implicated_by_mismatch(endorsements))
            return Failed(FailureReason.ENDORSEMENT_MISMATCH, proposal, tuple(sorted(implicated)))
        self.absolve(endorsements)
        missing = tuple(o for o in targets if o not in endorsements)
        if missing:
            return Failed(FailureReason.TIMEOUT, proposal, missing, detail="endorse")

        ordered = [endorsements[o] for o in targets]
        write_set = ordered[0].write_set
        digest = ordered[0].write_set_digest
        _, client_signature = self.registry.hash_and_sign(self.signer, write_set_bytes(write_set))
        tx = Transaction(
            transaction_id(proposal, digest), proposal, write_set,
            tuple(e.stripped() for e in ordered), client_signature,
        )
        return (yield from self._commit(tx, targets, ()))

    def _commit(self, tx: Transaction, targets: Sequence[str], prior: Tuple[Receipt, ...]) -> Steps:
        request_id = self._request_id(tx.proposal, "commit")
        responses = yield Broadcast(
            "commit", {org: CommitRequest(request_id, tx) for org in targets}, self.receipt_timeout
        )
        valid: Dict[str, Receipt] = {r.org_id: r for r in prior}
        rejections: List[Receipt] = []
        for org in targets:
            response = responses.get(org)
            if not isinstance(response, ReceiptResponse):
                continue
            receipt = response.receipt
            if receipt.tx_id != tx.tx_id or receipt.org_id != org or receipt.org_signature is None:
                continue
            if not self.registry.verify(org, receipt.signing_bytes, receipt.org_signature):
                continue
            if receipt.verdict is Verdict.VALID:
                valid[org] = receipt
            else:
                rejections.append(receipt)
        self.absolve(o for o in targets if o in valid)

        if rejections:
            codes = tuple(sorted({r.reason for r in rejections if r.reason}, key=lambda c: c.value))
            return Failed(FailureReason.REJECTED, tx.proposal, detail=",".join(c.value for c in codes),
                          transaction=tx, reason_codes=codes)
        if len(valid) >= self.policy.q:
            self._forgive()
            return Committed(tx.tx_id, tuple(valid[o] for o in sorted(valid)))
        missing = tuple(o for o in targets if o not in valid)
        return Failed(FailureReason.TIMEOUT, tx.proposal, missing, detail="commit",
                      transaction=tx, receipts=tuple(valid.values()))

    def avoid_and_retry_steps(self, failed: Failed) -> Steps:
        """
        Suspect the implicated organizations and try again elsewhere

        Timeouts after endorsement resend the same transaction to replacement
        organizations; other failures resubmit the request under a fresh clock.

        Raises:
            Exhausted: If fewer than q unsuspected organizations remain
        """
        outcome: Outcome = failed
        attempts = failed.attempts
        while isinstance(outcome, Failed) and outcome.reason in RETRYABLE:
            if attempts >= self.max_attempts:
                logger.warning(f"{self.client_id} gave up on {outcome.proposal.proposal_id} after {attempts} attempts")
                return outcome
            self.suspect(outcome.implicated)
            if outcome.transaction is not None and outcome.reason is FailureReason.TIMEOUT:
                have = {r.org_id for r in outcome.receipts}
                targets = self.select_targets(self.policy.q - len(have), exclude=have)
                outcome = yield from self._commit(outcome.transaction, targets, outcome.receipts)
            else:
                previous = outcome.proposal
                proposal = self.new_proposal(previous.contract_id, previous.function_name, previous.args)
                outcome = yield from self._attempt(proposal)
            attempts += 1
            outcome = replace(outcome, attempts=attempts)
        return outcome

    def submit_with_retry_steps(self, contract_id: str, function_name: str, args: Iterable[bytes]) -> Steps:
        outcome = yield from self.submit_steps(contract_id, function_name, args)
        if isinstance(outcome, Failed):
            outcome = yield from self.avoid_and_retry_steps(outcome)
        return outcome

    def read_steps(self, contract_id: str, function_name: str, args: Iterable[bytes]) -> Steps:
        """Steps of a read served by one organization; returns ReadValue or Failed"""
        proposal = self.new_proposal(contract_id, function_name, args)
        org = self.select_targets(1)[0]
        responses = yield Broadcast(
            "read", {org: ReadRequest(self._request_id(proposal, "read"), proposal)}, self.endorse_timeout
        )
        response = responses.get(org)
        if not isinstance(response, ReadResponse):
            return Failed(FailureReason.TIMEOUT, proposal, (org,), detail="read")
        self.absolve([org])
        return ReadValue(org, json.loads(response.value_json), response.error)

    # Blocking drivers

    def submit(self, transport: Transport, contract_id: str, function_name: str,
               args: Iterable[bytes]) -> Outcome:
        return run_steps(self.submit_steps(contract_id, function_name, args), transport)

    def avoid_and_retry(self, transport: Transport, failed: Failed) -> Outcome:
        return run_steps(self.avoid_and_retry_steps(failed), transport)

    def read(self, transport: Transport, contract_id: str, function_name: str,
             args: Iterable[bytes]) -> Union[ReadValue, Failed]:
        return run_steps(self.read_steps(contract_id, function_name, args), transport)
