"""
Organization node - endorses proposals, validates and commits transactions,
issues receipts and gossips committed transactions to its peers
"""
import json
import logging
import random
import threading
from collections import defaultdict
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple

from ..contracts.base import ContractError, ContractRegistry, ExecutionContext
from ..crdt.errors import CrdtError
from ..crypto.identity import IdentityRegistry, Signer
from ..database.ledger import Block, DuplicateTransaction, Ledger
from ..protocol.frames import (
    CommitRequest,
    EndorsementResponse,
    Frame,
    GossipAck,
    GossipPush,
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

SendFn = Callable[[str, Frame], None]


class ProposalError(ValueError):
    """Proposal rejected before contract execution"""


class BadClientSignature(ProposalError):
    pass


class OrgNode:
    """
    One organization of the network

    Endorsement runs contracts against read snapshots and never touches the
    ledger; commits serialize only on block append and per-object cache updates.
    """

    def __init__(self, signer: Signer, registry: IdentityRegistry, policy: EndorsementPolicy,
                 contracts: ContractRegistry, ledger: Optional[Ledger] = None,
                 rng: Optional[random.Random] = None):
        """
        Initialize an organization node

        Args:
            signer: Signing context of this organization
            registry: Network roster
            policy: Endorsement policy enforced at validation
            contracts: Installed contracts
            ledger: Ledger to commit to; a fresh in-memory ledger when None
            rng: Randomness for gossip peer selection
        """
        self.signer = signer
        self.registry = registry
        self.policy = policy
        self.contracts = contracts
        self.ledger = ledger if ledger is not None else Ledger(signer.id)
        self.rng = rng or random.Random(signer.id)
        self.receipts: Dict[str, Receipt] = {}
        self.acked: Dict[str, int] = {}
        # Transactions each peer pushed to us, so they are never pushed back
        self.peer_holds: Dict[str, Set[str]] = defaultdict(set)
        self._commit_lock = threading.Lock()

    @property
    def org_id(self) -> str:
        return self.signer.id

    # Execute phase

    def _check_proposal(self, proposal: Proposal) -> None:
        signature = proposal.client_signature
        if signature is None or not self.registry.verify(proposal.client_id, proposal.signing_bytes, signature):
            raise BadClientSignature(f"Proposal {proposal.proposal_id} is not signed by {proposal.client_id}")

    def _context(self, proposal: Proposal) -> ExecutionContext:
        return ExecutionContext(proposal.client_id, proposal.client_clock, proposal.args, self.ledger)

    def endorse(self, proposal: Proposal) -> Endorsement:
        """
        Execute a proposal and sign the resulting write-set

        Raises:
            BadClientSignature: If the client is unknown or the signature fails
            ContractError: If the contract rejects the proposal
        """
        self._check_proposal(proposal)
        contract = self.contracts.get(proposal.contract_id)
        write_set = tuple(contract.execute(proposal.function_name, self._context(proposal)))
        for op in write_set:
            op.validate()
        digest, signature = self.registry.hash_and_sign(self.signer, write_set_bytes(write_set))
        logger.debug(f"{self.org_id} endorsed {proposal.proposal_id} with {len(write_set)} operations")
        return Endorsement(self.org_id, write_set, digest, signature)

    def read(self, proposal: Proposal):
        """Answer a read function from the committed state of this organization"""
        self._check_proposal(proposal)
        contract = self.contracts.get(proposal.contract_id)
        return contract.query(proposal.function_name, self._context(proposal))

    # Commit phase

    def validate_transaction(self, tx: Transaction,
                             policy: Optional[EndorsementPolicy] = None) -> Tuple[Verdict, Optional[ReasonCode]]:
        """
        Judge a transaction against the endorsement policy

        Returns:
            (verdict, reason); the reason is None for Valid transactions
        """
        policy = policy or self.policy
        digest = tx.write_set_digest
        client_sig = tx.client_signature
        if client_sig is None or tx.proposal.client_signature is None:
            return Verdict.INVALID, ReasonCode.BAD_CLIENT_SIG
        if not self.registry.verify_digest(tx.proposal.client_id, digest, client_sig):
            return Verdict.INVALID, ReasonCode.BAD_CLIENT_SIG
        if not self.registry.verify(tx.proposal.client_id, tx.proposal.signing_bytes,
                                    tx.proposal.client_signature):
            return Verdict.INVALID, ReasonCode.BAD_CLIENT_SIG
        if tx.tx_id != transaction_id(tx.proposal, digest):
            return Verdict.INVALID, ReasonCode.DIGEST_MISMATCH

        endorsers: Set[str] = set()
        for endorsement in tx.endorsements:
            if not self.registry.is_organization(endorsement.org_id):
                return Verdict.INVALID, ReasonCode.BAD_ENDORSEMENT_SIG
            if endorsement.org_id in endorsers:
                return Verdict.INVALID, ReasonCode.DUPLICATE_ENDORSER
            if endorsement.write_set_digest != digest:
                return Verdict.INVALID, ReasonCode.DIGEST_MISMATCH
            if not self.registry.verify_digest(endorsement.org_id, digest, endorsement.org_signature):
                return Verdict.INVALID, ReasonCode.BAD_ENDORSEMENT_SIG
            endorsers.add(endorsement.org_id)
        if len(endorsers) < policy.q:
            return Verdict.INVALID, ReasonCode.POLICY_UNSATISFIED
        return Verdict.VALID, None

    def _sign_receipt(self, block: Block, reason: Optional[ReasonCode]) -> Receipt:
        _, signature = self.registry.hash_and_sign(
            self.signer, Receipt.signing_bytes_for(block.block_hash, block.validity)
        )
        return Receipt(block.transaction.tx_id, self.org_id, block.block_hash, block.validity, signature, reason)

    def _stored_receipt(self, tx_id: str) -> Receipt:
        receipt = self.receipts.get(tx_id)
        if receipt is None:
            # Ledger reloaded from disk: re-sign from the stored block
            block = self.ledger.block_of(tx_id)
            _, reason = self.validate_transaction(block.transaction)
            receipt = self._sign_receipt(block, reason)
            self.receipts[tx_id] = receipt
        return receipt

    def commit(self, tx: Transaction) -> Receipt:
        """
        Validate and commit a transaction, once

        Returns:
            Receipt (Valid) or rejection (Invalid); the stored one for duplicates
        """
        if self.ledger.has_transaction(tx.tx_id):
            return self._stored_receipt(tx.tx_id)
        verdict, reason = self.validate_transaction(tx)
        with self._commit_lock:
            try:
                block = self.ledger.append_block(tx, verdict)
            except DuplicateTransaction:
                return self._stored_receipt(tx.tx_id)
            receipt = self._sign_receipt(block, reason)
            self.receipts[tx.tx_id] = receipt
        if verdict is Verdict.INVALID:
            logger.warning(f"{self.org_id} rejected {tx.tx_id[:12]}: {reason.value}")
        else:
            logger.debug(f"{self.org_id} committed {tx.tx_id[:12]} at height {block.height}")
        return receipt

    # Gossip

    def gossip_round(self, peers: List[str], ratio: int, send: SendFn) -> Set[str]:
        """
        Push unacknowledged valid transactions to ``ratio`` random peers

        Transactions a peer gossiped to this node are left out of its batches.

        Args:
            peers: Candidate peer organizations
            ratio: Number of peers contacted this round
            send: Transport callback ``send(peer_id, frame)``

        Returns:
            Ids of the transactions sent
        """
        peers = [p for p in peers if p != self.org_id]
        if ratio > len(peers):
            raise ValueError(f"Gossip ratio {ratio} exceeds the {len(peers)} available peers")
        valid = list(self.ledger.valid_tx_ids)
        upto = len(valid)
        sent: Set[str] = set()
        for peer in self.rng.sample(sorted(peers), ratio):
            start = self.acked.get(peer, 0)
            if start >= upto:
                continue
            held = self.peer_holds[peer]
            batch = tuple(
                self.ledger.block_of(tx_id).transaction for tx_id in valid[start:upto] if tx_id not in held
            )
            if not batch:
                self.acknowledge(peer, upto)
                continue
            send(peer, GossipPush(self.org_id, batch, upto))
            sent.update(tx.tx_id for tx in batch)
        if sent:
            logger.debug(f"{self.org_id} gossiped {len(sent)} transactions")
        return sent

    def receive_gossip(self, push: GossipPush) -> GossipAck:
        self.peer_holds[push.sender_id].update(tx.tx_id for tx in push.transactions)
        for tx in push.transactions:
            self.commit(tx)
        return GossipAck(self.org_id, push.upto)

    def acknowledge(self, peer_id: str, upto: int) -> None:
        if upto > self.acked.get(peer_id, 0):
            self.acked[peer_id] = upto

    # Message dispatch

    def handle(self, frame: Frame) -> Optional[Frame]:
        """
        Process one request frame

        Returns:
            The response frame, or None for frames that need no answer
        """
        if isinstance(frame, ProposeRequest):
            try:
                return EndorsementResponse(frame.request_id, self.org_id, self.endorse(frame.proposal))
            except (ProposalError, ContractError, CrdtError) as e:
                logger.warning(f"{self.org_id} refused to endorse {frame.proposal.proposal_id}: {e}")
                return EndorsementResponse(frame.request_id, self.org_id, None, type(e).__name__)
        if isinstance(frame, CommitRequest):
            return ReceiptResponse(frame.request_id, self.org_id, self.commit(frame.transaction))
        if isinstance(frame, ReadRequest):
            try:
                value = self.read(frame.proposal)
                return ReadResponse(frame.request_id, self.org_id, json.dumps(value, sort_keys=True))
            except (ProposalError, ContractError) as e:
                return ReadResponse(frame.request_id, self.org_id, "null", type(e).__name__)
        if isinstance(frame, GossipPush):
            return self.receive_gossip(frame)
        if isinstance(frame, GossipAck):
            self.acknowledge(frame.sender_id, frame.upto)
            return None
        logger.warning(f"{self.org_id} ignoring unexpected frame {type(frame).__name__}")
        return None

    def committed_valid(self) -> Set[str]:
        return set(self.ledger.valid_tx_ids)

    def state_digest(self) -> str:
        return self.ledger.state_digest()


def peers_of(org_id: str, org_ids: Iterable[str]) -> List[str]:
    return sorted(o for o in org_ids if o != org_id)
