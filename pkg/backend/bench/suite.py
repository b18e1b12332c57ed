"""
Repeated experiments and aggregated result tables
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from .config import WorkloadConfig
from .experiment import Experiment

logger = logging.getLogger(__name__)


class SuiteError(RuntimeError):
    """An experiment of the suite failed"""

    def __init__(self, config_index: int, error: Exception):
        super().__init__(f"Configuration {config_index} failed: {error}")
        self.config_index = config_index


def run_directory(out_dir: Path, config_index: int, repetition: int, single: bool) -> Path:
    return Path(out_dir) if single else Path(out_dir) / "runs" / f"c{config_index:02d}-r{repetition:02d}"


def run_suite(configs: Sequence[WorkloadConfig], repetitions: int = 3, out_dir: Optional[Path] = None,
              seed_stride: int = 0, keep_ledgers: bool = False, quiesce_rounds: int = 32) -> pd.DataFrame:
    """
    Run every configuration ``repetitions`` times and average the metrics

    Args:
        configs: Workload configurations
        repetitions: Runs per configuration
        out_dir: Directory for ``runs.csv`` per configuration, ``summary.csv`` and ``summary.json``
        seed_stride: Seed increment between repetitions; 0 repeats the same seed
        keep_ledgers: Persist ledgers and state digests of every run below ``out_dir``
        quiesce_rounds: Gossip rounds after the run before digests are recorded

    Returns:
        Summary table, one row per configuration

    Raises:
        SuiteError: Carrying the index of the failing configuration
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    out_dir = Path(out_dir) if out_dir is not None else None
    single = len(configs) == 1 and repetitions == 1
    rows: List[dict] = []

    for index, config in enumerate(configs):
        config_rows = []
        for repetition in range(repetitions):
            run_config = config.model_copy(update={"seed": config.seed + repetition * seed_stride})
            run_dir = run_directory(out_dir, index, repetition, single) if out_dir is not None else None
            ledger_dir = run_dir / "ledgers" if keep_ledgers and run_dir is not None else None
            logger.info(f"Suite: configuration {index} ({config.name}), repetition {repetition + 1}/{repetitions}")
            try:
                experiment = Experiment(run_config, ledger_dir)
                try:
                    report = experiment.run()
                    if ledger_dir is not None:
                        experiment.quiesce(quiesce_rounds)
                        experiment.write_digests(run_dir / "digests.json")
                finally:
                    experiment.close()
            except Exception as e:
                raise SuiteError(index, e) from e
            config_rows.append({
                "config_index": index,
                "name": config.name,
                "repetition": repetition,
                "seed": run_config.seed,
                **report.summary_row(),
            })
        rows.extend(config_rows)
        if out_dir is not None:
            config_dir = out_dir / f"config-{index:02d}"
            config_dir.mkdir(parents=True, exist_ok=True)
            pd.DataFrame(config_rows).to_csv(config_dir / "runs.csv", index=False)

    runs = pd.DataFrame(rows).fillna(0)
    summary = (
        runs.drop(columns=["repetition", "seed"])
        .groupby(["config_index", "name"], sort=True)
        .mean(numeric_only=True)
        .reset_index()
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        summary.to_csv(out_dir / "summary.csv", index=False)
        summary.to_json(out_dir / "summary.json", orient="records", indent=2)
        logger.info(f"Suite summary written to {out_dir}")
    return summary
