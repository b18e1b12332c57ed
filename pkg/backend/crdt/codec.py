"""
Canonical binary encoding for operations and write-sets

Fixed field order, big-endian integers and u32 length prefixes; the bytes
produced here are what endorsements sign and blocks hash, so they must be
identical across processes.
"""
import struct
from typing import Iterable, List, Sequence

from .clock import OperationId
from .operation import CrdtType, Operation, Value

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")

_TYPE_TAGS = {
    CrdtType.G_COUNTER: 1,
    CrdtType.CRDT_MAP: 2,
    CrdtType.MV_REGISTER: 3,
}
_TAG_TYPES = {tag: kind for kind, tag in _TYPE_TAGS.items()}

VALUE_NULL = 0
VALUE_INT = 1
VALUE_BYTES = 2


class CodecError(ValueError):
    """Raised when bytes do not decode to a canonical structure"""


class Writer:
    """Append-only builder for canonical byte strings"""

    def __init__(self):
        self._parts: List[bytes] = []

    def u8(self, value: int) -> "Writer":
        self._parts.append(_U8.pack(value))
        return self

    def u32(self, value: int) -> "Writer":
        self._parts.append(_U32.pack(value))
        return self

    def u64(self, value: int) -> "Writer":
        self._parts.append(_U64.pack(value))
        return self

    def i64(self, value: int) -> "Writer":
        self._parts.append(_I64.pack(value))
        return self

    def blob(self, value: bytes) -> "Writer":
        self._parts.append(_U32.pack(len(value)))
        self._parts.append(value)
        return self

    def text(self, value: str) -> "Writer":
        return self.blob(value.encode("utf-8"))

    def raw(self, value: bytes) -> "Writer":
        self._parts.append(value)
        return self

    def value(self, value: Value) -> "Writer":
        if value is None:
            return self.u8(VALUE_NULL)
        if isinstance(value, int) and not isinstance(value, bool):
            return self.u8(VALUE_INT).i64(value)
        if isinstance(value, bytes):
            return self.u8(VALUE_BYTES).blob(value)
        raise CodecError(f"Cannot encode value of type {type(value).__name__}")

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Strict cursor over canonical bytes"""

    def __init__(self, data: bytes):
        self._data = memoryview(data)
        self._pos = 0

    def _take(self, size: int) -> bytes:
        end = self._pos + size
        if end > len(self._data):
            raise CodecError(f"Truncated input at offset {self._pos}")
        chunk = self._data[self._pos:end].tobytes()
        self._pos = end
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def i64(self) -> int:
        return _I64.unpack(self._take(8))[0]

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as e:
            raise CodecError(f"Invalid UTF-8 text: {e}") from e

    def raw(self, size: int) -> bytes:
        return self._take(size)

    def value(self) -> Value:
        tag = self.u8()
        if tag == VALUE_NULL:
            return None
        if tag == VALUE_INT:
            return self.i64()
        if tag == VALUE_BYTES:
            return self.blob()
        raise CodecError(f"Unknown value tag {tag}")

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def finish(self) -> None:
        if self.remaining:
            raise CodecError(f"{self.remaining} trailing bytes after canonical structure")


def encode_value(value: Value) -> bytes:
    return Writer().value(value).getvalue()


def write_operation(writer: Writer, op: Operation) -> Writer:
    writer.text(op.object_id)
    writer.text(op.op_id.client_id).u64(op.op_id.clock)
    writer.u32(len(op.path))
    for segment in op.path:
        writer.text(segment)
    writer.value(op.value)
    writer.u8(_TYPE_TAGS[op.value_type])
    writer.u64(op.clock)
    return writer


def read_operation(reader: Reader) -> Operation:
    object_id = reader.text()
    op_id = OperationId(reader.text(), reader.u64())
    path = tuple(reader.text() for _ in range(reader.u32()))
    value = reader.value()
    tag = reader.u8()
    if tag not in _TAG_TYPES:
        raise CodecError(f"Unknown CRDT type tag {tag}")
    clock = reader.u64()
    if clock != op_id.clock:
        raise CodecError(f"Operation clock {clock} disagrees with id {op_id}")
    return Operation(object_id, op_id, path, value, _TAG_TYPES[tag], clock)


def encode_operation(op: Operation) -> bytes:
    return write_operation(Writer(), op).getvalue()


def decode_operation(data: bytes) -> Operation:
    reader = Reader(data)
    op = read_operation(reader)
    reader.finish()
    return op


def write_write_set(writer: Writer, ops: Sequence[Operation]) -> Writer:
    writer.u32(len(ops))
    for op in ops:
        write_operation(writer, op)
    return writer


def read_write_set(reader: Reader) -> List[Operation]:
    return [read_operation(reader) for _ in range(reader.u32())]


def encode_write_set(ops: Iterable[Operation]) -> bytes:
    return write_write_set(Writer(), list(ops)).getvalue()


def decode_write_set(data: bytes) -> List[Operation]:
    reader = Reader(data)
    ops = read_write_set(reader)
    reader.finish()
    return ops
