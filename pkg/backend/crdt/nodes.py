"""
Materialized CRDT nodes and their built-in conflict resolution
"""
from typing import Any, Dict, List, Optional, Set, Tuple, Union

from .clock import OperationId
from .codec import Writer, encode_value
from .errors import MalformedOperation
from .operation import CrdtType, Operation, Value

TAG_COUNTER = 1
TAG_MAP = 2
TAG_REGISTER = 3
TAG_SLOT = 4


def _value_rank(value: Value) -> bytes:
    return encode_value(value)


class SurvivorSet:
    """
    Values surviving happened-before filtering at one location

    Same-client clocks are totally ordered, so at most one value per client
    can survive; values from different clients are concurrent and all kept.
    A null value is a tombstone that removes the client's earlier values.
    """

    def __init__(self):
        self.applied_clocks: Set[OperationId] = set()
        self._latest: Dict[str, Tuple[int, Value]] = {}

    def assign(self, op_id: OperationId, value: Value) -> bool:
        """
        Apply an assignment

        Returns:
            True if the survivor set changed
        """
        latest = self._latest.get(op_id.client_id)
        if op_id in self.applied_clocks:
            # Same id seen again: only a conflicting value at the newest clock matters
            if latest is not None and latest[0] == op_id.clock and \
                    _value_rank(value) > _value_rank(latest[1]):
                self._latest[op_id.client_id] = (op_id.clock, value)
                return True
            return False

        self.applied_clocks.add(op_id)
        if latest is not None and latest[0] > op_id.clock:
            return False
        self._latest[op_id.client_id] = (op_id.clock, value)
        return True

    def survivors(self) -> List[Tuple[OperationId, Value]]:
        """Surviving (id, value) pairs in canonical (client_id, clock) order"""
        return [
            (OperationId(client_id, clock), value)
            for client_id, (clock, value) in sorted(self._latest.items())
            if value is not None
        ]

    def write_state(self, writer: Writer) -> None:
        applied = sorted(self.applied_clocks)
        writer.u32(len(applied))
        for op_id in applied:
            writer.text(op_id.client_id).u64(op_id.clock)
        survivors = self.survivors()
        writer.u32(len(survivors))
        for op_id, value in survivors:
            writer.text(op_id.client_id).u64(op_id.clock).value(value)


class CrdtNode:
    """Base class of the three CRDT node kinds"""

    kind: CrdtType

    @property
    def applied_clocks(self) -> Set[OperationId]:
        raise NotImplementedError

    def apply(self, op: Operation) -> bool:
        raise NotImplementedError

    def view(self) -> Any:
        raise NotImplementedError

    def write_state(self, writer: Writer) -> None:
        raise NotImplementedError


class GCounterNode(CrdtNode):
    """Grow-only counter; increments are commutative so nothing conflicts"""

    kind = CrdtType.G_COUNTER

    def __init__(self):
        self.counter_total = 0
        self._increments: Dict[OperationId, int] = {}

    @property
    def applied_clocks(self) -> Set[OperationId]:
        return set(self._increments)

    def apply(self, op: Operation) -> bool:
        if not isinstance(op.value, int) or op.value <= 0:
            raise MalformedOperation(f"GCounter increment must be positive, got {op.value!r}")
        previous = self._increments.get(op.op_id)
        if previous is not None:
            if op.value <= previous:
                return False
            self.counter_total += op.value - previous
        else:
            self.counter_total += op.value
        self._increments[op.op_id] = op.value
        return True

    def view(self) -> int:
        return self.counter_total

    def write_state(self, writer: Writer) -> None:
        writer.u8(TAG_COUNTER).i64(self.counter_total)
        writer.u32(len(self._increments))
        for op_id in sorted(self._increments):
            writer.text(op_id.client_id).u64(op_id.clock).i64(self._increments[op_id])


class RegisterNode(CrdtNode):
    """Multi-value register"""

    kind = CrdtType.MV_REGISTER

    def __init__(self):
        self.values = SurvivorSet()

    @property
    def applied_clocks(self) -> Set[OperationId]:
        return self.values.applied_clocks

    def apply(self, op: Operation) -> bool:
        return self.values.assign(op.op_id, op.value)

    def view(self) -> List[Value]:
        return [value for _, value in self.values.survivors()]

    def write_state(self, writer: Writer) -> None:
        writer.u8(TAG_REGISTER)
        self.values.write_state(writer)


class MapSlot:
    """Scalar value stored under one key of a CRDT Map"""

    def __init__(self, key: str):
        self.key = key
        self.values = SurvivorSet()

    @property
    def applied_clocks(self) -> Set[OperationId]:
        return self.values.applied_clocks

    def apply(self, op: Operation) -> bool:
        return self.values.assign(op.op_id, op.value)

    @property
    def empty(self) -> bool:
        return not self.values.survivors()

    def view(self) -> Any:
        """
        Single survivor reads as the plain value; concurrent survivors read as
        a conflict map keyed ``<key>#<client_id>:<clock>``
        """
        survivors = self.values.survivors()
        if len(survivors) == 1:
            return survivors[0][1]
        return self.conflicts()

    def conflicts(self) -> Dict[str, Value]:
        return {f"{self.key}#{op_id}": value for op_id, value in self.values.survivors()}

    def write_state(self, writer: Writer) -> None:
        writer.u8(TAG_SLOT)
        self.values.write_state(writer)


MapEntry = Union[CrdtNode, MapSlot]


class MapNode(CrdtNode):
    """CRDT Map; values are scalar slots or nested CRDT nodes"""

    kind = CrdtType.CRDT_MAP

    def __init__(self):
        self.entries: Dict[str, MapEntry] = {}

    @property
    def applied_clocks(self) -> Set[OperationId]:
        clocks: Set[OperationId] = set()
        for entry in self.entries.values():
            if isinstance(entry, MapSlot):
                clocks |= entry.applied_clocks
        return clocks

    def apply(self, op: Operation) -> bool:
        key = op.path[-1]
        slot = self.entries.get(key)
        if slot is None:
            slot = MapSlot(key)
            self.entries[key] = slot
        return slot.apply(op)

    def keys(self) -> List[str]:
        return sorted(
            key for key, entry in self.entries.items()
            if not (isinstance(entry, MapSlot) and entry.empty)
        )

    def view(self) -> Dict[str, Any]:
        return {key: self.entries[key].view() for key in self.keys()}

    def write_state(self, writer: Writer) -> None:
        writer.u8(TAG_MAP).u32(len(self.entries))
        for key in sorted(self.entries):
            writer.text(key)
            self.entries[key].write_state(writer)


def new_node(kind: CrdtType) -> CrdtNode:
    if kind is CrdtType.G_COUNTER:
        return GCounterNode()
    if kind is CrdtType.MV_REGISTER:
        return RegisterNode()
    return MapNode()


def node_matches(entry: Optional[MapEntry], op: Operation) -> bool:
    """Whether an existing map entry can take the operation"""
    if op.value_type is CrdtType.CRDT_MAP:
        return isinstance(entry, MapSlot)
    return isinstance(entry, CrdtNode) and entry.kind is op.value_type
