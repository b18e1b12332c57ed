# CRDT engine package
from .clock import LamportClock, OperationId
from .engine import NOT_FOUND, CrdtObject, ReadResult, apply_operations, read, replay, resolve_conflict
from .errors import CrdtError, MalformedOperation, TypeMismatch
from .operation import CrdtType, Operation

__all__ = [
    "CrdtError",
    "CrdtObject",
    "CrdtType",
    "LamportClock",
    "MalformedOperation",
    "NOT_FOUND",
    "Operation",
    "OperationId",
    "ReadResult",
    "TypeMismatch",
    "apply_operations",
    "read",
    "replay",
    "resolve_conflict",
]
