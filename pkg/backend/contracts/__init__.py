# Smart contracts executed by organizations
from .base import (
    ContractDescriptor,
    ContractError,
    ContractRegistry,
    ExecutionContext,
    InvalidParameters,
    NonPositiveBid,
    UnknownContract,
    UnknownElection,
    UnknownFunction,
    UnknownParty,
    default_registry,
)
