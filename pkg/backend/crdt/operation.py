"""
Operation model - one CRDT modification carried in a write-set
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple, Union

from .clock import OperationId
from .errors import MalformedOperation

Value = Union[int, bytes, None]

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1


class CrdtType(str, Enum):
    """The three supported CRDTs"""

    G_COUNTER = "GCounter"
    CRDT_MAP = "CrdtMap"
    MV_REGISTER = "MVRegister"


@dataclass(frozen=True)
class Operation:
    """
    A single modification of a CRDT object

    The path starts at the object root. For CrdtMap operations the last path
    segment is the key being inserted into the map addressed by the rest of
    the path.
    """

    object_id: str
    op_id: OperationId
    path: Tuple[str, ...]
    value: Value
    value_type: CrdtType
    clock: int = field(default=-1)

    def __post_init__(self):
        # Path lists are accepted for convenience but stored as tuples
        if not isinstance(self.path, tuple):
            object.__setattr__(self, "path", tuple(self.path))
        if not isinstance(self.value_type, CrdtType):
            object.__setattr__(self, "value_type", CrdtType(self.value_type))
        if self.clock == -1:
            object.__setattr__(self, "clock", self.op_id.clock)

    def validate(self) -> None:
        """
        Check the type-specific constraints of the operation

        Raises:
            MalformedOperation: If the operation cannot be applied to any object
        """
        if self.clock != self.op_id.clock:
            raise MalformedOperation(
                f"Clock {self.clock} disagrees with operation id {self.op_id}"
            )
        if self.clock < 0:
            raise MalformedOperation(f"Negative clock in {self.op_id}")
        if isinstance(self.value, bool) or not isinstance(self.value, (int, bytes, type(None))):
            raise MalformedOperation(
                f"Unsupported value type {type(self.value).__name__} in {self.op_id}"
            )
        if isinstance(self.value, int) and not INT64_MIN <= self.value <= INT64_MAX:
            raise MalformedOperation(f"Value out of 64-bit range in {self.op_id}")

        if self.value_type is CrdtType.G_COUNTER:
            if not isinstance(self.value, int) or self.value <= 0:
                raise MalformedOperation(
                    f"GCounter increment must be a positive integer, got {self.value!r}"
                )
        elif self.value_type is CrdtType.CRDT_MAP and not self.path:
            raise MalformedOperation(f"CrdtMap operation {self.op_id} has no key")

    def __str__(self) -> str:
        return f"{self.value_type.value}@{self.object_id}/{'/'.join(self.path)}[{self.op_id}]"
