"""
Tests for the ledger: hash chain, persistence, tamper detection and the object cache
"""
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.crdt.operation import CrdtType
from backend.database.ledger import (
    GENESIS_HASH,
    Block,
    CorruptLog,
    DuplicateTransaction,
    Ledger,
    first_invalid_height,
    verify_records,
)
from backend.database.storage import LedgerStorage, join_records, split_records
from backend.protocol.messages import Verdict
from testkit import make_tx, op

COUNTER = CrdtType.G_COUNTER
REGISTER = CrdtType.MV_REGISTER


def counter_tx(clock, amount=1, object_id="counter", client="client-0000", key="hits"):
    return make_tx([op(object_id, client, clock, [key], amount, COUNTER)], client=client, clock=clock)


def fill(ledger, count, invalid_every=0):
    txs = []
    for i in range(1, count + 1):
        tx = counter_tx(i, amount=i, object_id=f"counter-{i % 3}")
        verdict = Verdict.INVALID if invalid_every and i % invalid_every == 0 else Verdict.VALID
        ledger.append_block(tx, verdict)
        txs.append(tx)
    return txs


def test_first_block_links_to_genesis():
    ledger = Ledger("org-01")
    block = ledger.append_block(counter_tx(1), Verdict.VALID)
    assert block.height == 0
    assert block.prev_hash == GENESIS_HASH
    assert ledger.head_hash == block.block_hash
    assert ledger.verify_chain()


def test_chain_links_every_block():
    ledger = Ledger("org-01")
    fill(ledger, 10, invalid_every=4)
    assert ledger.height == 10
    for previous, block in zip(ledger.blocks, ledger.blocks[1:]):
        assert block.prev_hash == previous.block_hash
    assert ledger.verify_chain()


def test_invalid_transactions_are_logged_but_not_applied():
    ledger = Ledger("org-01")
    ledger.append_block(counter_tx(1, amount=5), Verdict.VALID)
    ledger.append_block(counter_tx(2, amount=7), Verdict.INVALID)
    assert ledger.height == 2
    assert ledger.read_object("counter", ["hits"]).value == 5
    assert len(ledger.valid_tx_ids) == 1


def test_duplicate_transaction_is_refused():
    ledger = Ledger("org-01")
    tx = counter_tx(1)
    ledger.append_block(tx, Verdict.VALID)
    with pytest.raises(DuplicateTransaction):
        ledger.append_block(tx, Verdict.VALID)
    assert ledger.height == 1


def test_block_of_finds_committed_transaction():
    ledger = Ledger("org-01")
    txs = fill(ledger, 3)
    assert ledger.block_of(txs[1].tx_id).height == 1
    assert ledger.block_of("unknown") is None
    assert ledger.has_transaction(txs[2].tx_id)


def test_tampered_block_is_detected():
    ledger = Ledger("org-01")
    fill(ledger, 5)
    blocks = list(ledger.blocks)
    blocks[2] = replace(blocks[2], validity=Verdict.INVALID)
    assert first_invalid_height(blocks) == 2

    reordered = [ledger.blocks[1], ledger.blocks[0]] + list(ledger.blocks[2:])
    assert first_invalid_height(reordered) == 0


def test_block_encoding_round_trip():
    ledger = Ledger("org-01")
    fill(ledger, 3)
    for block in ledger.blocks:
        decoded = Block.decode(block.encode())
        assert decoded.block_hash == block.block_hash
        assert decoded.transaction.tx_id == block.transaction.tx_id
        assert decoded.recompute_hash() == block.block_hash


def test_single_byte_mutations_are_always_detected():
    ledger = Ledger("org-01")
    fill(ledger, 20, invalid_every=5)
    records = [block.encode() for block in ledger.blocks]
    assert verify_records(records)

    rng = random.Random(1234)
    for _ in range(1000):
        mutated = list(records)
        index = rng.randrange(len(mutated))
        position = rng.randrange(len(mutated[index]))
        data = bytearray(mutated[index])
        data[position] ^= rng.randrange(1, 256)
        mutated[index] = bytes(data)
        assert not verify_records(mutated)


def test_persisted_ledger_reloads(tmp_path):
    ledger = Ledger("org-01", LedgerStorage(str(tmp_path)))
    fill(ledger, 12, invalid_every=3)
    height, head, digest = ledger.height, ledger.head_hash, ledger.state_digest()
    values = {oid: ledger.read_object(oid).value for oid in ledger.object_ids()}
    ledger.close()

    reloaded = Ledger.open("org-01", str(tmp_path))
    try:
        assert reloaded.height == height
        assert reloaded.head_hash == head
        assert reloaded.verify_chain()
        assert reloaded.state_digest() == digest
        assert {oid: reloaded.read_object(oid).value for oid in reloaded.object_ids()} == values
        with pytest.raises(DuplicateTransaction):
            reloaded.append_block(reloaded.blocks[0].transaction, Verdict.VALID)
    finally:
        reloaded.close()


def test_truncated_tail_record_is_dropped(tmp_path):
    ledger = Ledger("org-01", LedgerStorage(str(tmp_path)))
    fill(ledger, 4)
    ledger.close()
    log = tmp_path / LedgerStorage.LOG_FILE
    with open(log, "ab") as f:
        f.write(b"\x00\x00\x01\x00partial")

    reloaded = Ledger.open("org-01", str(tmp_path))
    try:
        assert reloaded.height == 4
        assert reloaded.verify_chain()
    finally:
        reloaded.close()


def test_crash_between_log_and_op_store_is_repaired(tmp_path, monkeypatch):
    ledger = Ledger("org-01", LedgerStorage(str(tmp_path)))
    ledger.append_block(counter_tx(1, amount=2), Verdict.VALID)
    ledger.append_block(counter_tx(2, amount=9), Verdict.INVALID)

    def crash(seq, ops):
        raise OSError("disk full")

    monkeypatch.setattr(ledger.op_store, "put_ops", crash)
    lost = counter_tx(3, amount=5)
    with pytest.raises(OSError):
        ledger.append_block(lost, Verdict.VALID)
    monkeypatch.undo()
    ledger.close()

    reloaded = Ledger.open("org-01", str(tmp_path))
    try:
        assert reloaded.has_transaction(lost.tx_id)
        assert reloaded.op_store.stored_seqs() == {0, 2}
        assert reloaded.read_object("counter", ["hits"]).value == 7
    finally:
        reloaded.close()

    # A second reopen finds nothing left to restore
    again = Ledger.open("org-01", str(tmp_path))
    try:
        assert again.read_object("counter", ["hits"]).value == 7
    finally:
        again.close()


def test_undecodable_record_raises(tmp_path):
    storage = LedgerStorage(str(tmp_path))
    storage.append_block(b"not a block")
    storage.close()
    with pytest.raises(CorruptLog):
        Ledger.open("org-01", str(tmp_path))


def test_record_framing():
    records = [b"a", b"", b"ccc"]
    data = join_records(records)
    assert split_records(data) == records
    assert split_records(data[:-1]) == records[:2]


def test_cache_eviction_and_replay_agree():
    ledger = Ledger("org-01", cache_capacity=1)
    for i in range(1, 7):
        ledger.append_block(counter_tx(i, amount=i, object_id=f"counter-{i % 2}"), Verdict.VALID)
    assert ledger.read_object("counter-0", ["hits"]).value == 2 + 4 + 6
    assert ledger.read_object("counter-1", ["hits"]).value == 1 + 3 + 5
    for object_id in ledger.object_ids():
        assert ledger.get_object(object_id).serialize() == ledger.replay_object(object_id).serialize()
    ledger.evict()
    assert ledger.read_object("counter-0", ["hits"]).value == 12


def test_concurrent_reads_of_different_objects_share_a_small_cache():
    ledger = Ledger("org-01", cache_capacity=2)
    object_ids = [f"counter-{i}" for i in range(8)]
    for clock, object_id in enumerate(object_ids * 3, start=1):
        ledger.append_block(counter_tx(clock, amount=1, object_id=object_id), Verdict.VALID)

    def reader(worker):
        rng = random.Random(worker)
        for _ in range(400):
            object_id = rng.choice(object_ids)
            assert ledger.read_object(object_id, ["hits"]).value == 3
            if rng.random() < 0.05:
                ledger.evict()

    with ThreadPoolExecutor(max_workers=6) as pool:
        for future in [pool.submit(reader, w) for w in range(6)]:
            future.result()
    assert len(ledger._cache) <= 2


def test_state_digest_is_order_independent():
    first, second = Ledger("org-01"), Ledger("org-02")
    txs = [
        make_tx([op("reg", f"client-{i % 3:04d}", i, [], f"v{i}".encode(), REGISTER)],
                client=f"client-{i % 3:04d}", clock=i)
        for i in range(1, 10)
    ]
    for tx in txs:
        first.append_block(tx, Verdict.VALID)
    for tx in reversed(txs):
        second.append_block(tx, Verdict.VALID)
    assert first.state_digest() == second.state_digest()
    assert first.head_hash != second.head_hash


def test_snapshot_reads_do_not_see_later_commits():
    ledger = Ledger("org-01")
    ledger.append_block(counter_tx(1, amount=2), Verdict.VALID)
    snapshot = ledger.get_object("counter")
    ledger.append_block(counter_tx(2, amount=3), Verdict.VALID)
    assert snapshot.root.view()["hits"] == 2
    assert ledger.read_object("counter", ["hits"]).value == 5
