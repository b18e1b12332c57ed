"""
Ledger Storage Layer - block log file and operation store on disk
"""
import logging
import sqlite3
import struct
import threading
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set

from ..crdt.codec import CodecError, decode_operation, encode_operation
from ..crdt.operation import Operation

logger = logging.getLogger(__name__)

_LENGTH = struct.Struct(">I")


class MemoryOpStore:
    """Operation store kept in memory; ordered by (commit sequence, position)"""

    def __init__(self):
        self._ops: Dict[str, List[Operation]] = defaultdict(list)
        self._seqs: Set[int] = set()

    def put_ops(self, seq: int, ops: Sequence[Operation]) -> None:
        self._seqs.add(seq)
        for op in ops:
            self._ops[op.object_id].append(op)

    def stored_seqs(self) -> Set[int]:
        return set(self._seqs)

    def get(self, object_id: str) -> List[Operation]:
        return list(self._ops.get(object_id, ()))

    def object_ids(self) -> List[str]:
        return sorted(self._ops)

    def close(self) -> None:
        pass


class SqliteOpStore:
    """
    Durable ordered key-value store keyed by (object_id, commit sequence)

    All operations of one transaction are written in a single SQLite
    transaction, so a crash never leaves half a write-set behind.
    """

    def __init__(self, db_path: Path):
        self.db_path = Path(db_path)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(str(self.db_path), check_same_thread=False)
        with self._conn:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS ops ("
                " object_id TEXT NOT NULL,"
                " seq INTEGER NOT NULL,"
                " idx INTEGER NOT NULL,"
                " op BLOB NOT NULL,"
                " PRIMARY KEY (object_id, seq, idx))"
            )

    def put_ops(self, seq: int, ops: Sequence[Operation]) -> None:
        rows = [(op.object_id, seq, idx, encode_operation(op)) for idx, op in enumerate(ops)]
        with self._lock, self._conn:
            self._conn.executemany("INSERT INTO ops VALUES (?, ?, ?, ?)", rows)

    def get(self, object_id: str) -> List[Operation]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT op FROM ops WHERE object_id = ? ORDER BY seq, idx", (object_id,)
            ).fetchall()
        return [decode_operation(bytes(row[0])) for row in rows]

    def object_ids(self) -> List[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT DISTINCT object_id FROM ops ORDER BY object_id"
            ).fetchall()
        return [row[0] for row in rows]

    def stored_seqs(self) -> Set[int]:
        """Commit sequences with at least one stored operation"""
        with self._lock:
            rows = self._conn.execute("SELECT DISTINCT seq FROM ops").fetchall()
        return {row[0] for row in rows}

    def close(self) -> None:
        with self._lock:
            self._conn.close()


class LedgerStorage:
    """Handles on-disk storage of one organization's ledger"""

    LOG_FILE = "blocks.log"
    OP_STORE_FILE = "op_store.sqlite"

    def __init__(self, data_dir: str = "data/ledger"):
        """
        Initialize ledger storage

        Args:
            data_dir: Directory holding the block log and the operation store
        """
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / self.LOG_FILE
        self.op_store = SqliteOpStore(self.data_dir / self.OP_STORE_FILE)
        self._log_lock = threading.Lock()
        logger.info(f"Ledger storage initialized at: {self.data_dir}")

    def append_block(self, record: bytes) -> None:
        """
        Append one length-prefixed canonical block to the log

        Args:
            record: Encoded block
        """
        with self._log_lock:
            try:
                with open(self.log_path, "ab") as f:
                    f.write(_LENGTH.pack(len(record)))
                    f.write(record)
            except OSError as e:
                logger.error(f"Error appending block to {self.log_path}: {e}")
                raise

    def load_block_records(self, strict: bool = False) -> List[bytes]:
        """
        Read every block record from the log

        Args:
            strict: Raise CodecError on a truncated tail instead of dropping it

        Returns:
            Encoded blocks in height order
        """
        if not self.log_path.exists():
            return []
        with open(self.log_path, "rb") as f:
            data = f.read()
        return split_records(data, source=str(self.log_path), strict=strict)

    def close(self) -> None:
        self.op_store.close()


def split_records(data: bytes, source: str = "log", strict: bool = False) -> List[bytes]:
    records = []
    pos = 0
    while pos < len(data):
        if pos + _LENGTH.size > len(data):
            if strict:
                raise CodecError(f"Truncated length prefix at offset {pos} in {source}")
            logger.warning(f"Ignoring truncated length prefix at offset {pos} in {source}")
            break
        (size,) = _LENGTH.unpack_from(data, pos)
        start = pos + _LENGTH.size
        if start + size > len(data):
            if strict:
                raise CodecError(f"Truncated block record at offset {pos} in {source}")
            logger.warning(f"Ignoring truncated block record at offset {pos} in {source}")
            break
        records.append(data[start:start + size])
        pos = start + size
    return records


def join_records(records: Iterable[bytes]) -> bytes:
    return b"".join(_LENGTH.pack(len(r)) + r for r in records)
