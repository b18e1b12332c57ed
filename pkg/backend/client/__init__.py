# Client SDK package
from .session import (
    Broadcast,
    ClientError,
    ClientSession,
    Committed,
    Exhausted,
    Failed,
    FailureReason,
    ReadValue,
    run_steps,
)
