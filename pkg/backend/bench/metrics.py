"""
Latency and throughput accounting for benchmark runs
"""
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

MODIFY = "modify"
READ = "read"


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile; 0.0 for an empty sample"""
    if len(values) == 0:
        return 0.0
    return float(np.percentile(np.asarray(values, dtype=float), p, method="inverted_cdf"))


@dataclass
class TxRecord:
    kind: str
    submitted_at: float
    finished_at: Optional[float] = None
    ok: bool = False
    reason: Optional[str] = None
    attempts: int = 1

    @property
    def latency(self) -> float:
        return self.finished_at - self.submitted_at


class MetricsReport(BaseModel):
    """Outcome of one experiment"""

    submitted: int = 0
    committed: int = 0
    failed: int = 0
    in_flight: int = 0
    modify_submitted: int = 0
    modify_committed: int = 0
    read_submitted: int = 0
    read_completed: int = 0
    elapsed: float = 0.0
    throughput: float = Field(0.0, description="Committed transactions per second")
    modify_throughput: float = 0.0
    latency_avg_ms: float = 0.0
    latency_p1_ms: float = 0.0
    latency_p99_ms: float = 0.0
    modify_latency_avg_ms: float = 0.0
    read_latency_avg_ms: float = 0.0
    retries: int = 0
    throughput_series: List[int] = Field(default_factory=list)
    failures_by_reason: Dict[str, int] = Field(default_factory=dict)
    trace_digest: str = ""

    def summary_row(self) -> Dict[str, float]:
        """Flat scalar view used for CSV tables"""
        row = self.model_dump(exclude={"throughput_series", "failures_by_reason", "trace_digest"})
        for reason, count in self.failures_by_reason.items():
            row[f"failed_{reason}"] = count
        return row


class MetricsCollector:
    """Records submissions and outcomes; the report is computed at the end"""

    def __init__(self):
        self.records: List[TxRecord] = []

    def submit(self, kind: str, at: float) -> TxRecord:
        record = TxRecord(kind, at)
        self.records.append(record)
        return record

    @staticmethod
    def finish(record: TxRecord, at: float, ok: bool, reason: Optional[str] = None,
               attempts: int = 1) -> None:
        record.finished_at = at
        record.ok = ok
        record.reason = reason
        record.attempts = attempts

    def report(self, elapsed: float, horizon: Optional[float] = None, trace_digest: str = "") -> MetricsReport:
        """
        Summarize the run

        Args:
            elapsed: Seconds over which transactions arrived (throughput denominator)
            horizon: Seconds covered by the per-second series; defaults to ``elapsed``
            trace_digest: Event trace digest of the simulator
        """
        horizon = elapsed if horizon is None else horizon
        finished = [r for r in self.records if r.finished_at is not None]
        done = [r for r in finished if r.ok]
        modifies = [r for r in self.records if r.kind == MODIFY]
        latencies = [r.latency * 1000 for r in done]
        modify_latencies = [r.latency * 1000 for r in done if r.kind == MODIFY]
        read_latencies = [r.latency * 1000 for r in done if r.kind == READ]

        series = [0] * max(0, math.ceil(horizon))
        for r in done:
            second = int(r.finished_at)
            if 0 <= second < len(series):
                series[second] += 1

        modify_committed = sum(1 for r in done if r.kind == MODIFY)
        return MetricsReport(
            submitted=len(self.records),
            committed=len(done),
            failed=len(finished) - len(done),
            in_flight=len(self.records) - len(finished),
            modify_submitted=len(modifies),
            modify_committed=modify_committed,
            read_submitted=len(self.records) - len(modifies),
            read_completed=len(done) - modify_committed,
            elapsed=elapsed,
            throughput=len(done) / elapsed if elapsed > 0 else 0.0,
            modify_throughput=modify_committed / elapsed if elapsed > 0 else 0.0,
            latency_avg_ms=float(np.mean(latencies)) if latencies else 0.0,
            latency_p1_ms=percentile(latencies, 1),
            latency_p99_ms=percentile(latencies, 99),
            modify_latency_avg_ms=float(np.mean(modify_latencies)) if modify_latencies else 0.0,
            read_latency_avg_ms=float(np.mean(read_latencies)) if read_latencies else 0.0,
            retries=sum(r.attempts - 1 for r in finished),
            throughput_series=series,
            failures_by_reason=dict(sorted(Counter(r.reason or "Unknown" for r in finished if not r.ok).items())),
            trace_digest=trace_digest,
        )
