"""
Contract registry and the execution context handed to contract functions
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from ..crdt.clock import OperationId
from ..crdt.engine import ReadResult
from ..crdt.operation import CrdtType, Operation, Value

logger = logging.getLogger(__name__)


class ContractError(ValueError):
    """Base class for errors raised while executing a contract function"""


class UnknownContract(ContractError):
    pass


class UnknownFunction(ContractError):
    pass


class UnknownParty(ContractError):
    pass


class UnknownElection(ContractError):
    pass


class NonPositiveBid(ContractError):
    pass


class InvalidParameters(ContractError):
    pass


class StateView(Protocol):
    """Read-only access to an organization's committed state"""

    def read_object(self, object_id: str, path: Sequence[str] = ()) -> ReadResult:
        ...


@dataclass(frozen=True)
class ExecutionContext:
    """Inputs of one deterministic contract execution"""

    client_id: str
    clock: int
    args: Tuple[bytes, ...]
    state: Optional[StateView] = None

    @property
    def op_id(self) -> OperationId:
        return OperationId(self.client_id, self.clock)

    def operation(self, object_id: str, path: Sequence[str], value: Value,
                  value_type: CrdtType) -> Operation:
        return Operation(object_id, self.op_id, tuple(path), value, value_type)

    def text_arg(self, index: int) -> str:
        try:
            return self.args[index].decode("utf-8")
        except IndexError:
            raise InvalidParameters(f"Missing argument {index}") from None
        except UnicodeDecodeError as e:
            raise InvalidParameters(f"Argument {index} is not UTF-8: {e}") from e

    def int_arg(self, index: int) -> int:
        text = self.text_arg(index)
        try:
            return int(text)
        except ValueError:
            raise InvalidParameters(f"Argument {index} is not an integer: {text!r}") from None

    def optional_int_arg(self, index: int, default: int) -> int:
        return self.int_arg(index) if index < len(self.args) else default


ModifyHandler = Callable[[ExecutionContext], List[Operation]]
ReadHandler = Callable[[ExecutionContext], Any]


@dataclass
class ContractDescriptor:
    """A contract: modify functions yield write-sets, read functions yield values"""

    contract_id: str
    functions: Dict[str, ModifyHandler] = field(default_factory=dict)
    read_functions: Dict[str, ReadHandler] = field(default_factory=dict)

    def execute(self, function_name: str, ctx: ExecutionContext) -> List[Operation]:
        handler = self.functions.get(function_name)
        if handler is None:
            raise UnknownFunction(f"{self.contract_id} has no function {function_name!r}")
        return handler(ctx)

    def query(self, function_name: str, ctx: ExecutionContext) -> Any:
        handler = self.read_functions.get(function_name)
        if handler is None:
            raise UnknownFunction(f"{self.contract_id} has no read function {function_name!r}")
        return to_json_value(handler(ctx))


class ContractRegistry:
    """Contracts installed on an organization, keyed by contract id"""

    def __init__(self, contracts: Sequence[ContractDescriptor] = ()):
        self._contracts: Dict[str, ContractDescriptor] = {}
        for contract in contracts:
            self.register(contract)

    def register(self, contract: ContractDescriptor) -> None:
        self._contracts[contract.contract_id] = contract

    def get(self, contract_id: str) -> ContractDescriptor:
        contract = self._contracts.get(contract_id)
        if contract is None:
            raise UnknownContract(f"No contract {contract_id!r}")
        return contract

    def __contains__(self, contract_id: str) -> bool:
        return contract_id in self._contracts

    def ids(self) -> List[str]:
        return sorted(self._contracts)


def to_json_value(value: Any) -> Any:
    """Convert read results to JSON-compatible values; bytes become text"""
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="backslashreplace")
    if isinstance(value, dict):
        return {str(k): to_json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_json_value(v) for v in value]
    return value


def default_registry(elections: int = 8, parties: int = 8,
                     object_universe: int = 1024) -> ContractRegistry:
    """
    Registry with the voting, auction and synthetic contracts

    Args:
        elections: Number of elections in the voting fixture
        parties: Parties per election
        object_universe: Number of distinct synthetic objects per CRDT type
    """
    from .auction import auction_contract
    from .synthetic import synthetic_contract
    from .voting import VotingFixture, voting_contract

    return ContractRegistry([
        voting_contract(VotingFixture.numbered(elections, parties)),
        auction_contract(),
        synthetic_contract(object_universe),
    ])
