"""
Shared builders for the test suite: small networks and in-process transports
"""
import random
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.client.session import ClientSession
from backend.contracts.base import ContractRegistry, default_registry
from backend.crdt.clock import OperationId
from backend.crdt.engine import CrdtObject, NOT_FOUND, ReadResult, apply_operations, read
from backend.crdt.operation import CrdtType, Operation
from backend.crypto.genesis import generate_network
from backend.crypto.identity import IdentityRegistry, Signer
from backend.network.byzantine import corrupt_endorsement
from backend.node.org_node import OrgNode
from backend.protocol.frames import CommitRequest, EndorsementResponse, Frame, ReceiptResponse
from backend.protocol.messages import EndorsementPolicy, Proposal, Transaction, transaction_id


def op(object_id: str, client: str, clock: int, path: Sequence[str], value, kind: CrdtType) -> Operation:
    return Operation(object_id, OperationId(client, clock), tuple(path), value, kind)


def make_tx(ops: Sequence[Operation], client: str = "client-0000", clock: int = 1,
            name: str = "test") -> Transaction:
    """Unsigned transaction; enough for ledger-level tests that skip validation"""
    proposal = Proposal(f"{client}:{clock}:{name}", client, clock, "synthetic", "modify", ())
    tx = Transaction("", proposal, tuple(ops), ())
    return replace(tx, tx_id=transaction_id(proposal, tx.write_set_digest))


class ObjectsView:
    """State view over loose CRDT objects"""

    def __init__(self):
        self.objects: Dict[str, CrdtObject] = {}

    def apply(self, ops: Iterable[Operation]) -> None:
        for o in ops:
            obj = self.objects.setdefault(o.object_id, CrdtObject(o.object_id))
            apply_operations(obj, [o])

    def read_object(self, object_id: str, path: Sequence[str] = ()) -> ReadResult:
        obj = self.objects.get(object_id)
        return read(obj, path) if obj is not None else NOT_FOUND


@dataclass
class Network:
    org_ids: List[str]
    client_ids: List[str]
    registry: IdentityRegistry
    signers: Dict[str, Signer]
    contracts: ContractRegistry
    policy: EndorsementPolicy
    nodes: Dict[str, OrgNode]

    def session(self, client_id: Optional[str] = None, roster: Optional[Sequence[str]] = None,
                policy: Optional[EndorsementPolicy] = None, **kwargs) -> ClientSession:
        client_id = client_id or self.client_ids[0]
        return ClientSession(
            self.signers[client_id], self.registry, roster or self.org_ids, policy or self.policy,
            rng=random.Random(f"session:{client_id}"), **kwargs,
        )

    def honest_write_set(self, proposal: Proposal, org_id: Optional[str] = None) -> bytes:
        node = self.nodes[org_id or self.org_ids[-1]]
        endorsement = node.endorse(proposal)
        return Transaction("", proposal, endorsement.write_set, ()).write_set_bytes

    def gossip_send(self, sender: str):
        """Send callback delivering a push and feeding the ack back to the sender"""
        def send(dst: str, frame: Frame) -> None:
            ack = self.nodes[dst].handle(frame)
            if ack is not None:
                self.nodes[sender].handle(ack)
        return send

    def gossip_everyone(self, rounds: int = 1, ratio: int = 1) -> None:
        for _ in range(rounds):
            for org_id in self.org_ids:
                self.nodes[org_id].gossip_round(self.org_ids, ratio, self.gossip_send(org_id))


def build_network(num_orgs: int = 4, q: int = 2, num_clients: int = 2, seed: int = 0,
                  elections: int = 2, parties: int = 4,
                  node_policy: Optional[EndorsementPolicy] = None) -> Network:
    org_ids = [f"org-{i:02d}" for i in range(1, num_orgs + 1)]
    client_ids = [f"client-{i:04d}" for i in range(num_clients)]
    registry, signers = generate_network(org_ids, client_ids, seed)
    contracts = default_registry(elections=elections, parties=parties, object_universe=64)
    policy = EndorsementPolicy(q, num_orgs)
    nodes = {
        org_id: OrgNode(signers[org_id], registry, node_policy or policy, contracts,
                        rng=random.Random(f"gossip:{seed}:{org_id}"))
        for org_id in org_ids
    }
    return Network(org_ids, client_ids, registry, signers, contracts, policy, nodes)


class DirectTransport:
    """
    Blocking transport calling nodes in process

    Silent organizations never answer; corrupting organizations rewrite their
    endorsements; ``drop_receipts`` organizations commit but their receipts
    are lost on the way back.
    """

    def __init__(self, network: Network, silent: Iterable[str] = (), corrupt: Iterable[str] = (),
                 drop_receipts: Iterable[str] = ()):
        self.network = network
        self.silent = set(silent)
        self.corrupt = set(corrupt)
        self.drop_receipts = set(drop_receipts)
        self.calls: List[str] = []

    def broadcast(self, frames: Dict[str, Frame], timeout: float) -> Dict[str, Frame]:
        responses: Dict[str, Frame] = {}
        for dest in sorted(frames):
            frame = frames[dest]
            self.calls.append(f"{type(frame).__name__}:{dest}")
            if dest in self.silent:
                continue
            response = self.network.nodes[dest].handle(frame)
            if isinstance(response, ReceiptResponse) and dest in self.drop_receipts:
                continue
            if isinstance(response, EndorsementResponse) and dest in self.corrupt and response.endorsement:
                response = replace(
                    response, endorsement=corrupt_endorsement(response.endorsement, self.network.signers[dest])
                )
            if response is not None:
                responses[dest] = response
        return responses

    def commits_sent(self) -> int:
        return sum(1 for c in self.calls if c.startswith(CommitRequest.__name__))
