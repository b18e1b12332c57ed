"""
Synthetic contract for controlled benchmarks

Objects are named ``synthetic-<type>-<j>`` with ``j`` taken modulo the object
universe; operation ``k`` of a modification addresses key ``op-<k>`` so one
write-set never touches the same location twice.
"""
from typing import List, Optional

from ..crdt.operation import CrdtType, Operation
from .base import ContractDescriptor, ExecutionContext, InvalidParameters, StateView

CONTRACT_ID = "synthetic"
DEFAULT_UNIVERSE = 1024


def parse_crdt_type(name: str) -> CrdtType:
    aliases = {"Map": CrdtType.CRDT_MAP, "Register": CrdtType.MV_REGISTER, "Counter": CrdtType.G_COUNTER}
    if name in aliases:
        return aliases[name]
    try:
        return CrdtType(name)
    except ValueError:
        raise InvalidParameters(f"Unknown CRDT type {name!r}") from None


def object_ids(crdt_type: CrdtType, obj_count: int, offset: int = 0,
               universe: int = DEFAULT_UNIVERSE) -> List[str]:
    return [f"synthetic-{crdt_type.value}-{(offset + j) % universe}" for j in range(obj_count)]


def _value_for(ctx: ExecutionContext, crdt_type: CrdtType, k: int):
    if crdt_type is CrdtType.G_COUNTER:
        return 1
    return f"{ctx.client_id}:{ctx.clock}:{k}".encode("utf-8")


def synthetic_modify(ctx: ExecutionContext, obj_count: int, ops_per_obj: int, crdt_type: CrdtType,
                     offset: int = 0, universe: int = DEFAULT_UNIVERSE) -> List[Operation]:
    """
    Write-set of ``obj_count * ops_per_obj`` operations

    Raises:
        InvalidParameters: If a count is below one
    """
    if obj_count < 1 or ops_per_obj < 1:
        raise InvalidParameters(f"obj_count and ops_per_obj must be >= 1, got {obj_count}, {ops_per_obj}")
    if obj_count > universe:
        raise InvalidParameters(f"obj_count {obj_count} exceeds the object universe {universe}")
    return [
        ctx.operation(object_id, [f"op-{k}"], _value_for(ctx, crdt_type, k), crdt_type)
        for object_id in object_ids(crdt_type, obj_count, offset, universe)
        for k in range(ops_per_obj)
    ]


def synthetic_read(state: StateView, obj_count: int, crdt_type: CrdtType = CrdtType.G_COUNTER,
                   offset: int = 0, universe: int = DEFAULT_UNIVERSE) -> List[Optional[object]]:
    """Values of ``obj_count`` objects; counts above the universe wrap around"""
    if obj_count < 1:
        raise InvalidParameters(f"obj_count must be >= 1, got {obj_count}")
    values = []
    for object_id in object_ids(crdt_type, obj_count, offset, universe):
        result = state.read_object(object_id)
        values.append(result.value if result.found else None)
    return values


def synthetic_contract(universe: int = DEFAULT_UNIVERSE) -> ContractDescriptor:
    def _modify(ctx: ExecutionContext) -> List[Operation]:
        return synthetic_modify(
            ctx, ctx.int_arg(0), ctx.int_arg(1), parse_crdt_type(ctx.text_arg(2)),
            ctx.optional_int_arg(3, 0), universe,
        )

    def _read(ctx: ExecutionContext):
        crdt_type = parse_crdt_type(ctx.text_arg(1)) if len(ctx.args) > 1 else CrdtType.G_COUNTER
        return synthetic_read(ctx.state, ctx.int_arg(0), crdt_type, ctx.optional_int_arg(2, 0), universe)

    return ContractDescriptor(
        CONTRACT_ID,
        functions={"modify": _modify},
        read_functions={"read": _read},
    )
