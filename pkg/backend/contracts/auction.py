"""
Auction contract: one grow-only counter per bidder inside the auction's map
"""
from typing import List, Optional, Tuple

from ..crdt.operation import CrdtType, Operation
from .base import ContractDescriptor, ExecutionContext, NonPositiveBid, StateView

CONTRACT_ID = "auction"


def bid(ctx: ExecutionContext, bidder_id: str, bid_increase: int, auction_id: str) -> List[Operation]:
    """
    Increase a bidder's cumulative bid

    Raises:
        NonPositiveBid: If ``bid_increase`` is zero or negative
    """
    if bid_increase <= 0:
        raise NonPositiveBid(f"Bid increase must be positive, got {bid_increase}")
    return [ctx.operation(auction_id, [bidder_id], bid_increase, CrdtType.G_COUNTER)]


def get_highest_bid(state: StateView, auction_id: str) -> Optional[Tuple[str, int]]:
    """Highest cumulative bid; ties go to the smallest bidder id. None when empty"""
    result = state.read_object(auction_id)
    if not result.found:
        return None
    totals = [(bidder, total) for bidder, total in result.value.items() if isinstance(total, int)]
    if not totals:
        return None
    return min(totals, key=lambda item: (-item[1], item[0]))


def auction_contract() -> ContractDescriptor:
    def _bid(ctx: ExecutionContext) -> List[Operation]:
        return bid(ctx, ctx.text_arg(1), ctx.int_arg(2), ctx.text_arg(0))

    def _get_highest_bid(ctx: ExecutionContext):
        highest = get_highest_bid(ctx.state, ctx.text_arg(0))
        if highest is None:
            return None
        return {"bidder": highest[0], "amount": highest[1]}

    return ContractDescriptor(
        CONTRACT_ID,
        functions={"bid": _bid},
        read_functions={"get_highest_bid": _get_highest_bid},
    )
