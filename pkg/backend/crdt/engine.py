"""
CRDT objects and the operation-application algorithm

Each operation walks the object from its root to the modification location,
creating missing map levels on the way, and hands the change to the node's
conflict resolution. Work per operation is bounded by the path depth, so a
batch is linear in its length.
"""
import copy
import hashlib
import logging
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

from .codec import Writer
from .errors import CrdtError, MalformedOperation, TypeMismatch
from .nodes import CrdtNode, MapEntry, MapNode, MapSlot, new_node, node_matches
from .operation import CrdtType, Operation

logger = logging.getLogger(__name__)


class CrdtObject:
    """Materialized state of one CRDT object"""

    def __init__(self, object_id: str, root: Optional[CrdtNode] = None):
        self.object_id = object_id
        self.root = root

    def serialize(self) -> bytes:
        """Canonical bytes of the full state, including applied clocks"""
        writer = Writer().text(self.object_id)
        if self.root is None:
            writer.u8(0)
        else:
            writer.u8(1)
            self.root.write_state(writer)
        return writer.getvalue()

    def digest(self) -> bytes:
        return hashlib.sha256(self.serialize()).digest()

    def snapshot(self) -> "CrdtObject":
        """Independent copy that can be shared with readers"""
        return copy.deepcopy(self)

    def __repr__(self) -> str:
        kind = self.root.kind.value if self.root is not None else "empty"
        return f"CrdtObject({self.object_id!r}, {kind})"


@dataclass(frozen=True)
class ReadResult:
    """Side-effect free view of a location; not-found is a value"""

    found: bool
    kind: Optional[CrdtType] = None
    value: Any = None


NOT_FOUND = ReadResult(found=False)


def _locate(obj: CrdtObject, op: Operation) -> MapEntry:
    """
    Resolve (and create) the modification location of an operation

    Type checks run over the existing part of the path before anything is
    created, so a rejected operation leaves the object untouched.
    """
    path = op.path
    if op.value_type is not CrdtType.CRDT_MAP and not path:
        if obj.root is None:
            obj.root = new_node(op.value_type)
        elif obj.root.kind is not op.value_type:
            raise TypeMismatch(
                f"{op} addresses a {obj.root.kind.value} root of {obj.object_id}"
            )
        return obj.root

    map_path, leaf_key = path[:-1], path[-1]

    node = obj.root
    if node is not None and not isinstance(node, MapNode):
        raise TypeMismatch(f"{op} needs a map root, found {node.kind.value}")
    depth = 0
    while node is not None and depth < len(map_path):
        child = node.entries.get(map_path[depth])
        if child is None:
            break
        if not isinstance(child, MapNode):
            raise TypeMismatch(f"{op} crosses non-map entry {map_path[depth]!r}")
        node = child
        depth += 1
    if node is not None and depth == len(map_path):
        existing = node.entries.get(leaf_key)
        if existing is not None and not node_matches(existing, op):
            raise TypeMismatch(f"{op} disagrees with the entry stored at {leaf_key!r}")

    if obj.root is None:
        obj.root = MapNode()
    parent = obj.root
    for segment in map_path:
        child = parent.entries.get(segment)
        if child is None:
            child = MapNode()
            parent.entries[segment] = child
        parent = child

    if op.value_type is CrdtType.CRDT_MAP:
        # The map itself resolves conflicts for the key
        return parent
    leaf = parent.entries.get(leaf_key)
    if leaf is None:
        leaf = new_node(op.value_type)
        parent.entries[leaf_key] = leaf
    return leaf


def resolve_conflict(existing: MapEntry, op: Operation) -> MapEntry:
    """
    Apply an operation to the node it addresses

    GCounter adds; MV-Register and map keys keep the latest value per client
    and every concurrent value across clients; null removes the values it
    dominates.

    Raises:
        MalformedOperation: For invalid GCounter increments
    """
    existing.apply(op)
    return existing


def apply_operations(obj: CrdtObject, ops: Sequence[Operation],
                     skip_invalid: bool = False) -> CrdtObject:
    """
    Apply operations in the given order

    Args:
        obj: Object to mutate in place
        ops: Operations, all addressed to ``obj``
        skip_invalid: Log and skip operations raising CrdtError instead of
            propagating the error

    Returns:
        The same object
    """
    for op in ops:
        if op.object_id != obj.object_id:
            raise MalformedOperation(
                f"{op} addressed to {op.object_id!r}, not {obj.object_id!r}"
            )
        try:
            op.validate()
            resolve_conflict(_locate(obj, op), op)
        except CrdtError as e:
            if not skip_invalid:
                raise
            logger.warning(f"Skipping operation {op}: {e}")
    return obj


def replay(object_id: str, ops: Iterable[Operation]) -> CrdtObject:
    """Rebuild an object from its committed operations"""
    return apply_operations(CrdtObject(object_id), list(ops), skip_invalid=True)


def read(obj: Optional[CrdtObject], path: Sequence[str] = ()) -> ReadResult:
    """
    Read the value at a path

    Returns counter totals for GCounters, the survivor list for MV-Registers
    and a key → value dict for maps. Views are fresh objects; mutating them
    does not touch the CRDT. Concurrent values under one map key are
    addressed by a last segment of the form ``<key>#<client_id>:<clock>``.
    """
    if obj is None or obj.root is None:
        return NOT_FOUND
    entry: MapEntry = obj.root
    path = list(path)
    for index, segment in enumerate(path):
        if isinstance(entry, MapSlot):
            conflicts = entry.conflicts()
            if index != len(path) - 1 or segment not in conflicts:
                return NOT_FOUND
            return ReadResult(True, CrdtType.CRDT_MAP, conflicts[segment])
        if not isinstance(entry, MapNode):
            return NOT_FOUND
        child = entry.entries.get(segment)
        if child is None:
            return NOT_FOUND
        entry = child

    if isinstance(entry, MapSlot):
        if entry.empty:
            return NOT_FOUND
        return ReadResult(True, CrdtType.CRDT_MAP, entry.view())
    return ReadResult(True, entry.kind, entry.view())
