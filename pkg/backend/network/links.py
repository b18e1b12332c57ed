"""
Link model of the simulated network
"""
import random
from dataclasses import dataclass
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class LinkModel(BaseModel):
    """Delay, jitter, loss, duplication and bandwidth of one directed link"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base_delay_ms: float = Field(100.0, ge=0, description="One-way delay")
    jitter_ms: float = Field(4.0, ge=0, description="Uniform jitter around the delay")
    loss_rate: float = Field(0.0, ge=0, le=1)
    duplicate_rate: float = Field(0.0, ge=0, le=1)
    reorder: bool = Field(False, description="Allow later messages to overtake earlier ones")
    bandwidth_mbps: Optional[float] = Field(100.0, gt=0, description="Serialization rate; None disables it")


@dataclass
class LinkState:
    """Per-link bookkeeping for serialization and FIFO delivery"""

    busy_until: float = 0.0
    last_delivery: float = 0.0


def deliver(size: int, link: LinkModel, rng: random.Random, now: float,
            state: Optional[LinkState] = None) -> List[float]:
    """
    Schedule the deliveries of one message

    Args:
        size: Message size in bytes
        link: Link model
        rng: Randomness for loss, duplication and jitter
        now: Current simulated time in seconds
        state: Link state; required for bandwidth and FIFO modelling

    Returns:
        Absolute delivery times; empty when the message is lost
    """
    if link.loss_rate > 0 and rng.random() < link.loss_rate:
        return []
    copies = 2 if link.duplicate_rate > 0 and rng.random() < link.duplicate_rate else 1

    departure = now
    if link.bandwidth_mbps is not None and state is not None:
        start = max(now, state.busy_until)
        departure = start + size * 8 / (link.bandwidth_mbps * 1e6)
        state.busy_until = departure

    times = []
    for _ in range(copies):
        delay = link.base_delay_ms
        if link.jitter_ms > 0:
            delay += rng.uniform(-link.jitter_ms, link.jitter_ms)
        at = departure + max(0.0, delay) / 1000.0
        if not link.reorder and state is not None:
            at = max(at, state.last_delivery)
            state.last_delivery = at
        times.append(at)
    return times
