"""
Voting contract

Each party of an election is one CRDT Map object (``<election>/<party>``)
holding one MV-Register per voter. A vote sets the voter's register to
``true`` under the chosen party and ``false`` under every other party, so a
later vote of the same voter overwrites the earlier one everywhere.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

from ..crdt.operation import CrdtType, Operation
from .base import ContractDescriptor, ExecutionContext, StateView, UnknownElection, UnknownParty

logger = logging.getLogger(__name__)

CONTRACT_ID = "voting"
TRUE = b"true"
FALSE = b"false"


@dataclass(frozen=True)
class VotingFixture:
    """Elections and the parties standing in each of them"""

    elections: Tuple[str, ...]
    parties: Tuple[str, ...]

    @staticmethod
    def numbered(elections: int = 8, parties: int = 8) -> "VotingFixture":
        return VotingFixture(
            tuple(f"election-{i}" for i in range(elections)),
            tuple(f"party-{i}" for i in range(parties)),
        )

    def check(self, election_id: str, party_id: str) -> None:
        if election_id not in self.elections:
            raise UnknownElection(f"No election {election_id!r}")
        if party_id not in self.parties:
            raise UnknownParty(f"No party {party_id!r} in {election_id}")


def party_object_id(election_id: str, party_id: str) -> str:
    return f"{election_id}/{party_id}"


def vote(fixture: VotingFixture, ctx: ExecutionContext, voter_id: str,
         party_id: str, election_id: str) -> List[Operation]:
    """
    Build the write-set of one vote

    Returns:
        One MV-Register assignment per party of the election
    """
    fixture.check(election_id, party_id)
    return [
        ctx.operation(
            party_object_id(election_id, party),
            [voter_id],
            TRUE if party == party_id else FALSE,
            CrdtType.MV_REGISTER,
        )
        for party in fixture.parties
    ]


def read_vote_count(fixture: VotingFixture, state: StateView, party_id: str,
                    election_id: str) -> int:
    """
    Count voters whose register under the party holds only ``true``

    A register with concurrent ``true`` and ``false`` survivors is not counted.
    """
    fixture.check(election_id, party_id)
    result = state.read_object(party_object_id(election_id, party_id))
    if not result.found:
        return 0
    return sum(
        1 for survivors in result.value.values()
        if isinstance(survivors, list) and survivors and all(v == TRUE for v in survivors)
    )


def voting_contract(fixture: VotingFixture) -> ContractDescriptor:
    def _vote(ctx: ExecutionContext) -> List[Operation]:
        election_id, party_id, voter_id = ctx.text_arg(0), ctx.text_arg(1), ctx.text_arg(2)
        return vote(fixture, ctx, voter_id, party_id, election_id)

    def _read_vote_count(ctx: ExecutionContext) -> int:
        return read_vote_count(fixture, ctx.state, ctx.text_arg(1), ctx.text_arg(0))

    return ContractDescriptor(
        CONTRACT_ID,
        functions={"vote": _vote},
        read_functions={"read_vote_count": _read_vote_count},
    )
