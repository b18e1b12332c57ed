"""
Per-client Lamport clocks and operation identifiers
"""
from dataclasses import dataclass


@dataclass
class LamportClock:
    """Client-local logical clock, incremented with every submitted proposal"""

    counter: int = 0

    def __post_init__(self):
        if self.counter < 0:
            raise ValueError(f"Lamport clock cannot be negative: {self.counter}")

    def tick(self) -> int:
        """
        Advance the clock

        Returns:
            The new clock value
        """
        self.counter += 1
        return self.counter


@dataclass(frozen=True, order=True)
class OperationId:
    """Client identifier plus the client's clock; unique per CRDT object location"""

    client_id: str
    clock: int

    def dominates(self, other: "OperationId") -> bool:
        """
        Happened-before check

        Only operations of the same client are comparable; anything from a
        different client is concurrent.
        """
        return self.client_id == other.client_id and self.clock > other.clock

    def concurrent_with(self, other: "OperationId") -> bool:
        return self.client_id != other.client_id

    def __str__(self) -> str:
        return f"{self.client_id}:{self.clock}"
