"""
Per-organization ledger: hash-chain log, operation store and object cache
"""
import hashlib
import logging
import threading
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Union

from ..crdt.codec import CodecError, Reader, Writer
from ..crdt.engine import CrdtObject, ReadResult, apply_operations, read, replay
from ..protocol.messages import Transaction, Verdict, read_verdict, write_verdict
from .storage import LedgerStorage, MemoryOpStore, SqliteOpStore

logger = logging.getLogger(__name__)

GENESIS_HASH = bytes(32)


class LedgerError(RuntimeError):
    """Base class for ledger errors"""


class DuplicateTransaction(LedgerError):
    """Transaction id already committed to this ledger"""


class CorruptLog(LedgerError):
    """Block log on disk cannot be decoded"""


def block_hash(height: int, tx_bytes: bytes, prev_hash: bytes, validity: Verdict) -> bytes:
    writer = Writer().u64(height).blob(tx_bytes).raw(prev_hash)
    return hashlib.sha256(write_verdict(writer, validity).getvalue()).digest()


@dataclass(frozen=True)
class Block:
    """One transaction chained to the hash of its predecessor"""

    height: int
    transaction: Transaction
    prev_hash: bytes
    block_hash: bytes
    validity: Verdict
    # Raw transaction bytes as read from disk; hashing uses them when present
    tx_bytes: bytes = field(default=b"", compare=False, repr=False)

    @property
    def hashed_tx_bytes(self) -> bytes:
        return self.tx_bytes or self.transaction.canonical_bytes

    def recompute_hash(self) -> bytes:
        return block_hash(self.height, self.hashed_tx_bytes, self.prev_hash, self.validity)

    def encode(self) -> bytes:
        writer = Writer().u64(self.height).blob(self.hashed_tx_bytes)
        writer.raw(self.prev_hash).raw(self.block_hash)
        return write_verdict(writer, self.validity).getvalue()

    @staticmethod
    def decode(data: bytes) -> "Block":
        reader = Reader(data)
        height = reader.u64()
        tx_bytes = reader.blob()
        prev_hash = reader.raw(32)
        hash_value = reader.raw(32)
        validity = read_verdict(reader)
        reader.finish()
        return Block(height, Transaction.decode(tx_bytes), prev_hash, hash_value, validity, tx_bytes)


def first_invalid_height(blocks: Sequence[Block]) -> Optional[int]:
    """Height of the first block whose links or hash do not recompute, else None"""
    prev_hash = GENESIS_HASH
    for expected_height, block in enumerate(blocks):
        if block.height != expected_height or block.prev_hash != prev_hash:
            return expected_height
        if block.recompute_hash() != block.block_hash:
            return expected_height
        prev_hash = block.block_hash
    return None


def verify_chain(blocks: Sequence[Block]) -> bool:
    return first_invalid_height(blocks) is None


def verify_records(records: Sequence[bytes]) -> bool:
    """Verify encoded blocks; undecodable records count as tampering"""
    blocks = []
    for height, record in enumerate(records):
        try:
            blocks.append(Block.decode(record))
        except (CodecError, ValueError) as e:
            logger.warning(f"Block record at height {height} does not decode: {e}")
            return False
    return verify_chain(blocks)


class Ledger:
    """
    Append-only hash-chain log plus the materialized state it implies

    Blocks are appended by a single appender; cache updates and cache reads
    exclude each other per object, so reads of one object never block
    writes of another.
    """

    def __init__(self, org_id: str, storage: Optional[LedgerStorage] = None,
                 cache_capacity: Optional[int] = None):
        """
        Initialize a ledger

        Args:
            org_id: Owning organization
            storage: On-disk storage; memory only when None
            cache_capacity: Optional LRU cap on cached objects
        """
        self.org_id = org_id
        self.storage = storage
        self.op_store: Union[MemoryOpStore, SqliteOpStore] = (
            storage.op_store if storage is not None else MemoryOpStore()
        )
        self.cache_capacity = cache_capacity
        self.blocks: List[Block] = []
        self.committed_tx_ids: Set[str] = set()
        self._heights: Dict[str, int] = {}
        self.valid_tx_ids: List[str] = []
        self._cache: "OrderedDict[str, CrdtObject]" = OrderedDict()
        self._append_lock = threading.Lock()
        self._cache_lock = threading.Lock()
        self._locks_guard = threading.Lock()
        self._object_locks: Dict[str, threading.Lock] = {}

    @classmethod
    def open(cls, org_id: str, data_dir: str, cache_capacity: Optional[int] = None) -> "Ledger":
        """
        Reload a ledger persisted under ``data_dir``

        Raises:
            CorruptLog: If a block record cannot be decoded
        """
        storage = LedgerStorage(data_dir)
        ledger = cls(org_id, storage, cache_capacity)
        for height, record in enumerate(storage.load_block_records()):
            try:
                block = Block.decode(record)
            except (CodecError, ValueError) as e:
                raise CorruptLog(f"Block {height} in {storage.log_path} does not decode: {e}") from e
            ledger.blocks.append(block)
            ledger.committed_tx_ids.add(block.transaction.tx_id)
            ledger._heights[block.transaction.tx_id] = height
            if block.validity is Verdict.VALID:
                ledger.valid_tx_ids.append(block.transaction.tx_id)
        ledger._restore_missing_ops()
        logger.info(f"Ledger of {org_id} reloaded from {data_dir}: {len(ledger.blocks)} blocks")
        return ledger

    def _restore_missing_ops(self) -> None:
        # The log is written before the operation store; a crash in between leaves valid blocks without ops
        stored = self.op_store.stored_seqs()
        for block in self.blocks:
            if block.validity is Verdict.VALID and block.transaction.write_set and block.height not in stored:
                logger.warning(f"{self.org_id}: restoring operations of block {block.height} from the log")
                self.op_store.put_ops(block.height, block.transaction.write_set)

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def head_hash(self) -> bytes:
        return self.blocks[-1].block_hash if self.blocks else GENESIS_HASH

    def has_transaction(self, tx_id: str) -> bool:
        return tx_id in self.committed_tx_ids

    def block_of(self, tx_id: str) -> Optional[Block]:
        height = self._heights.get(tx_id)
        return self.blocks[height] if height is not None else None

    def _object_lock(self, object_id: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._object_locks.get(object_id)
            if lock is None:
                lock = threading.Lock()
                self._object_locks[object_id] = lock
            return lock

    def append_block(self, tx: Transaction, validity: Verdict) -> Block:
        """
        Chain a transaction to the head of the log

        Both valid and invalid transactions are logged; only valid ones reach
        the operation store and the cache.

        Raises:
            DuplicateTransaction: If the transaction id is already committed
        """
        with self._append_lock:
            if tx.tx_id in self.committed_tx_ids:
                raise DuplicateTransaction(f"Transaction {tx.tx_id} already committed at {self.org_id}")
            height = len(self.blocks)
            prev_hash = self.head_hash
            tx_bytes = tx.canonical_bytes
            block = Block(height, tx, prev_hash, block_hash(height, tx_bytes, prev_hash, validity), validity)
            if self.storage is not None:
                self.storage.append_block(block.encode())
            self.blocks.append(block)
            self.committed_tx_ids.add(tx.tx_id)
            self._heights[tx.tx_id] = height

            if validity is Verdict.VALID:
                self.valid_tx_ids.append(tx.tx_id)
                self.op_store.put_ops(height, tx.write_set)
                self._apply_to_cache(tx)
            logger.debug(f"{self.org_id} appended block {height} ({validity.value}) for {tx.tx_id[:12]}")
            return block

    def _apply_to_cache(self, tx: Transaction) -> None:
        by_object = defaultdict(list)
        for op in tx.write_set:
            by_object[op.object_id].append(op)
        for object_id in sorted(by_object):
            with self._object_lock(object_id):
                cached = self._cache_get(object_id)
                if cached is None:
                    # Replay already includes this transaction's operations
                    self._cache_put(object_id, replay(object_id, self.op_store.get(object_id)))
                else:
                    apply_operations(cached, by_object[object_id], skip_invalid=True)

    def _cache_get(self, object_id: str) -> Optional[CrdtObject]:
        with self._cache_lock:
            cached = self._cache.get(object_id)
            if cached is not None:
                self._cache.move_to_end(object_id)
            return cached

    def _cache_put(self, object_id: str, obj: CrdtObject) -> None:
        with self._cache_lock:
            self._cache[object_id] = obj
            self._cache.move_to_end(object_id)
            if self.cache_capacity is not None:
                while len(self._cache) > self.cache_capacity:
                    evicted, _ = self._cache.popitem(last=False)
                    logger.debug(f"{self.org_id} evicted {evicted} from cache")

    def _cached_object(self, object_id: str) -> CrdtObject:
        # An evicted object stays usable by the caller holding it; the next miss replays the store
        cached = self._cache_get(object_id)
        if cached is None:
            cached = replay(object_id, self.op_store.get(object_id))
            self._cache_put(object_id, cached)
        return cached

    def read_object(self, object_id: str, path: Sequence[str] = ()) -> ReadResult:
        """
        Read from the cache, rebuilding from the operation store on a miss

        Reflects every transaction this organization has committed.
        """
        with self._object_lock(object_id):
            return read(self._cached_object(object_id), path)

    def get_object(self, object_id: str) -> CrdtObject:
        """Snapshot of the cached object (copy-on-read)"""
        with self._object_lock(object_id):
            return self._cached_object(object_id).snapshot()

    def replay_object(self, object_id: str) -> CrdtObject:
        """Rebuild an object from the operation store, bypassing the cache"""
        return replay(object_id, self.op_store.get(object_id))

    def evict(self, object_id: Optional[str] = None) -> None:
        """Drop one object (or all) from the cache"""
        if object_id is None:
            with self._cache_lock:
                self._cache.clear()
        else:
            with self._object_lock(object_id), self._cache_lock:
                self._cache.pop(object_id, None)

    def object_ids(self) -> List[str]:
        return self.op_store.object_ids()

    def object_digest(self, object_id: str) -> bytes:
        with self._object_lock(object_id):
            return self._cached_object(object_id).digest()

    def state_digest(self) -> str:
        """Digest over every object's canonical state"""
        h = hashlib.sha256()
        for object_id in self.object_ids():
            h.update(object_id.encode("utf-8"))
            h.update(self.object_digest(object_id))
        return h.hexdigest()

    def verify_chain(self) -> bool:
        return verify_chain(self.blocks)

    def close(self) -> None:
        if self.storage is not None:
            self.storage.close()
