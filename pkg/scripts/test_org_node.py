"""
Tests for organization nodes: endorsement, validation, commit and gossip
"""
import json
import sys
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.crdt.codec import CodecError
from backend.crypto.identity import Identity, KeyPair, Role, Signer
from backend.database.ledger import Ledger
from backend.network.byzantine import corrupt_write_set
from backend.node.org_node import BadClientSignature, OrgNode
from backend.protocol.frames import (
    CommitRequest,
    EndorsementResponse,
    GossipPush,
    ProposeRequest,
    ReadRequest,
    ReadResponse,
    ReceiptResponse,
    decode_frame,
    encode_frame,
)
from backend.protocol.messages import (
    EndorsementPolicy,
    Proposal,
    ReasonCode,
    Receipt,
    Transaction,
    Verdict,
    transaction_id,
    write_set_bytes,
)
from testkit import build_network

VOTE = ("voting", "vote", (b"election-0", b"party-1", b"voter-1"))


@pytest.fixture
def net():
    return build_network(num_orgs=4, q=2)


def build_transaction(net, proposal, endorsers, write_set=None, client_id=None):
    """Endorse at ``endorsers`` and assemble a client-signed transaction"""
    endorsements = [net.nodes[org].endorse(proposal) for org in endorsers]
    write_set = endorsements[0].write_set if write_set is None else tuple(write_set)
    signer = net.signers[client_id or proposal.client_id]
    digest, signature = signer.sign(write_set_bytes(write_set))
    return Transaction(transaction_id(proposal, digest), proposal, write_set,
                       tuple(e.stripped() for e in endorsements), signature)


def test_endorsement_of_a_vote(net):
    proposal = net.session().new_proposal(*VOTE)
    endorsement = net.nodes["org-01"].endorse(proposal)
    assert len(endorsement.write_set) == 4
    assert net.registry.verify_digest("org-01", endorsement.write_set_digest, endorsement.org_signature)


def test_honest_endorsements_are_identical(net):
    proposal = net.session().new_proposal(*VOTE)
    first = net.nodes["org-01"].endorse(proposal)
    second = net.nodes["org-03"].endorse(proposal)
    assert write_set_bytes(first.write_set) == write_set_bytes(second.write_set)
    assert first.write_set_digest == second.write_set_digest


def test_endorsement_does_not_touch_the_ledger(net):
    node = net.nodes["org-01"]
    node.endorse(net.session().new_proposal(*VOTE))
    assert node.ledger.height == 0


def test_unregistered_client_is_refused(net):
    key_pair = KeyPair.generate()
    outsider = Signer(Identity("mallory", key_pair.public_key, Role.CLIENT), key_pair)
    unsigned = Proposal("mallory:1", "mallory", 1, *VOTE)
    _, signature = outsider.sign(unsigned.signing_bytes)
    with pytest.raises(BadClientSignature):
        net.nodes["org-01"].endorse(replace(unsigned, client_signature=signature))
    with pytest.raises(BadClientSignature):
        net.nodes["org-01"].endorse(unsigned)


def test_contract_errors_become_error_responses(net):
    proposal = net.session().new_proposal("voting", "vote", (b"election-0", b"party-9", b"voter-1"))
    response = net.nodes["org-01"].handle(ProposeRequest("r1", proposal))
    assert isinstance(response, EndorsementResponse)
    assert response.endorsement is None
    assert response.error == "UnknownParty"

    unknown = net.session().new_proposal("lottery", "draw", ())
    assert net.nodes["org-01"].handle(ProposeRequest("r2", unknown)).error == "UnknownContract"


def test_valid_transaction(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    assert net.nodes["org-03"].validate_transaction(tx) == (Verdict.VALID, None)


def test_policy_threshold(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02", "org-03"])
    node = net.nodes["org-04"]
    assert node.validate_transaction(tx, EndorsementPolicy(3, 4))[0] is Verdict.VALID
    assert node.validate_transaction(tx, EndorsementPolicy(4, 4)) == (Verdict.INVALID, ReasonCode.POLICY_UNSATISFIED)


def test_write_set_changed_after_endorsement(net):
    proposal = net.session().new_proposal(*VOTE)
    honest = build_transaction(net, proposal, ["org-01", "org-02"])
    corrupted = corrupt_write_set(honest.write_set, "attacker")

    # A third party cannot re-sign for the client
    tampered = replace(honest, write_set=corrupted)
    assert net.nodes["org-03"].validate_transaction(tampered)[0] is Verdict.INVALID

    # A colluding client signs the corrupted write-set; the endorsements no longer match
    colluding = build_transaction(net, proposal, ["org-01", "org-02"], write_set=corrupted)
    assert net.nodes["org-03"].validate_transaction(colluding) == (Verdict.INVALID, ReasonCode.DIGEST_MISMATCH)


def test_transaction_id_must_match(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    assert net.nodes["org-03"].validate_transaction(replace(tx, tx_id="0" * 64)) == (
        Verdict.INVALID, ReasonCode.DIGEST_MISMATCH
    )


def test_duplicate_endorser(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01"])
    doubled = replace(tx, endorsements=tx.endorsements * 2)
    assert net.nodes["org-03"].validate_transaction(doubled) == (Verdict.INVALID, ReasonCode.DUPLICATE_ENDORSER)


def test_forged_endorsements(net):
    proposal = net.session().new_proposal(*VOTE)
    tx = build_transaction(net, proposal, ["org-01", "org-02"])
    first, second = tx.endorsements

    # org-01 signs but claims to be org-02
    impersonated = replace(tx, endorsements=(first, replace(first, org_id="org-02")))
    assert net.nodes["org-03"].validate_transaction(impersonated) == (
        Verdict.INVALID, ReasonCode.BAD_ENDORSEMENT_SIG
    )

    # Clients cannot endorse
    _, client_sig = net.signers[proposal.client_id].sign(tx.write_set_bytes)
    by_client = replace(second, org_id=proposal.client_id, org_signature=client_sig)
    assert net.nodes["org-03"].validate_transaction(replace(tx, endorsements=(first, by_client))) == (
        Verdict.INVALID, ReasonCode.BAD_ENDORSEMENT_SIG
    )


def test_missing_client_signature(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    assert net.nodes["org-03"].validate_transaction(replace(tx, client_signature=None)) == (
        Verdict.INVALID, ReasonCode.BAD_CLIENT_SIG
    )


def test_commit_issues_signed_receipt(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    node = net.nodes["org-03"]
    receipt = node.commit(tx)
    assert receipt.verdict is Verdict.VALID
    assert receipt.block_hash == node.ledger.head_hash
    assert net.registry.verify("org-03", receipt.signing_bytes, receipt.org_signature)
    assert node.ledger.read_object("election-0/party-1", ["voter-1"]).value == [b"true"]


def test_duplicate_commit_returns_the_same_receipt(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    node = net.nodes["org-03"]
    first = node.commit(tx)
    second = node.commit(tx)
    assert first == second
    assert node.ledger.height == 1


def test_invalid_commit_changes_no_state(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01"])
    node = net.nodes["org-03"]
    before = node.state_digest()
    receipt = node.commit(tx)
    assert receipt.verdict is Verdict.INVALID
    assert receipt.reason is ReasonCode.POLICY_UNSATISFIED
    assert node.ledger.height == 1
    assert node.state_digest() == before
    assert node.committed_valid() == set()


def test_receipt_survives_reload(tmp_path):
    net = build_network(num_orgs=4, q=2)
    org = "org-03"
    ledger = Ledger.open(org, str(tmp_path))
    node = OrgNode(net.signers[org], net.registry, net.policy, net.contracts, ledger)
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    first = node.commit(tx)
    ledger.close()

    reloaded = OrgNode(net.signers[org], net.registry, net.policy, net.contracts, Ledger.open(org, str(tmp_path)))
    try:
        again = reloaded.commit(tx)
        assert again.block_hash == first.block_hash
        assert again.verdict is Verdict.VALID
        assert reloaded.ledger.height == 1
    finally:
        reloaded.ledger.close()


def test_read_request(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    node = net.nodes["org-01"]
    node.commit(tx)
    query = net.session().new_proposal("voting", "read_vote_count", (b"election-0", b"party-1"))
    response = node.handle(ReadRequest("r1", query))
    assert isinstance(response, ReadResponse)
    assert json.loads(response.value_json) == 1
    assert response.error == ""

    bad = net.session().new_proposal("voting", "read_vote_count", (b"election-7", b"party-1"))
    assert node.handle(ReadRequest("r2", bad)).error == "UnknownElection"


# Gossip

def test_gossip_between_two_organizations():
    net = build_network(num_orgs=2, q=1)
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01"])
    net.nodes["org-01"].commit(tx)
    sent = net.nodes["org-01"].gossip_round(["org-02"], 1, net.gossip_send("org-01"))
    assert sent == {tx.tx_id}
    assert net.nodes["org-02"].committed_valid() == {tx.tx_id}
    assert net.nodes["org-02"].state_digest() == net.nodes["org-01"].state_digest()
    # Acknowledged: nothing left to send
    assert net.nodes["org-01"].gossip_round(["org-02"], 1, net.gossip_send("org-01")) == set()


def test_unacknowledged_gossip_is_resent():
    net = build_network(num_orgs=2, q=1)
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01"])
    node = net.nodes["org-01"]
    node.commit(tx)
    lost = []
    node.gossip_round(["org-02"], 1, lambda dst, frame: lost.append(frame))
    assert len(lost) == 1
    assert node.gossip_round(["org-02"], 1, net.gossip_send("org-01")) == {tx.tx_id}


def test_gossip_is_not_pushed_back_to_its_sender():
    net = build_network(num_orgs=2, q=1)
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-02"])
    net.nodes["org-02"].commit(tx)
    net.nodes["org-02"].gossip_round(["org-01"], 1, net.gossip_send("org-02"))
    assert net.nodes["org-01"].committed_valid() == {tx.tx_id}

    pushed = []
    node = net.nodes["org-01"]
    assert node.gossip_round(["org-02"], 1, lambda dst, frame: pushed.append(frame)) == set()
    assert pushed == []
    assert node.acked["org-02"] == 1


def test_invalid_transactions_are_not_gossiped():
    net = build_network(num_orgs=2, q=2)
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01"])
    assert net.nodes["org-01"].commit(tx).verdict is Verdict.INVALID
    assert net.nodes["org-01"].gossip_round(["org-02"], 1, net.gossip_send("org-01")) == set()
    assert net.nodes["org-02"].ledger.height == 0


def test_gossip_reaches_every_organization():
    net = build_network(num_orgs=16, q=4)
    session = net.session()
    txs = []
    for i, org in enumerate(net.org_ids[:4]):
        proposal = session.new_proposal("voting", "vote", (b"election-0", b"party-0", f"voter-{i}".encode()))
        tx = build_transaction(net, proposal, net.org_ids[:4])
        net.nodes[org].commit(tx)
        txs.append(tx.tx_id)
    net.gossip_everyone(rounds=32, ratio=1)
    for node in net.nodes.values():
        assert node.committed_valid() == set(txs)
    assert len({node.state_digest() for node in net.nodes.values()}) == 1


def test_full_ratio_gossip_takes_one_round():
    net = build_network(num_orgs=16, q=1)
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01"])
    net.nodes["org-01"].commit(tx)
    net.nodes["org-01"].gossip_round(net.org_ids, 15, net.gossip_send("org-01"))
    assert all(node.committed_valid() == {tx.tx_id} for node in net.nodes.values())


def test_gossip_ratio_above_peer_count(net):
    with pytest.raises(ValueError):
        net.nodes["org-01"].gossip_round(net.org_ids, 4, net.gossip_send("org-01"))


def test_gossip_push_handled_like_commits(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    ack = net.nodes["org-04"].handle(GossipPush("org-01", (tx, tx), 1))
    assert ack.upto == 1
    assert net.nodes["org-04"].ledger.height == 1


# Frames

def test_commit_frame_round_trip(net):
    tx = build_transaction(net, net.session().new_proposal(*VOTE), ["org-01", "org-02"])
    frame = CommitRequest("r9", tx)
    decoded = decode_frame(encode_frame(frame))
    assert decoded.transaction.canonical_bytes == tx.canonical_bytes
    receipt = net.nodes["org-03"].handle(decoded)
    assert isinstance(receipt, ReceiptResponse)
    assert decode_frame(encode_frame(receipt)).receipt == receipt.receipt


def test_truncated_frame_is_rejected(net):
    proposal = net.session().new_proposal(*VOTE)
    data = encode_frame(ProposeRequest("r1", proposal))
    with pytest.raises(CodecError):
        decode_frame(data[:-3])
    with pytest.raises(CodecError):
        decode_frame(b"\x63" + data[1:])


def test_receipt_signing_bytes_depend_on_verdict():
    block_hash = bytes(range(32))
    assert Receipt.signing_bytes_for(block_hash, Verdict.VALID) != Receipt.signing_bytes_for(block_hash, Verdict.INVALID)
