"""
Command line entry point: run experiments, verify ledgers, check convergence
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..crdt.codec import CodecError
from ..database.ledger import CorruptLog, Ledger, verify_records
from ..database.storage import LedgerStorage
from ..settings import ConfigError, configure_logging
from .config import load_workloads
from .suite import SuiteError, run_suite

logger = logging.getLogger(__name__)


def ledger_dirs(root: Path) -> List[Path]:
    """Directories below ``root`` (inclusive) that hold a block log"""
    root = Path(root)
    if (root / LedgerStorage.LOG_FILE).exists():
        return [root]
    return sorted(p.parent for p in root.rglob(LedgerStorage.LOG_FILE))


def verify_ledger_dir(path: Path) -> bool:
    storage = LedgerStorage(str(path))
    try:
        return verify_records(storage.load_block_records(strict=True))
    except CodecError as e:
        logger.warning(f"Block log in {path} is damaged: {e}")
        return False
    finally:
        storage.close()


def convergence_report(out_dir: Path) -> Dict[str, bool]:
    """
    Recompute state digests from stored ledgers and compare them per run

    Returns:
        Run directory to whether all honest organizations agree with each
        other and with the digests recorded at the end of the run
    """
    results = {}
    for digests_file in sorted(Path(out_dir).rglob("digests.json")):
        run_dir = digests_file.parent
        with open(digests_file, "r", encoding="utf-8") as f:
            recorded = json.load(f)
        honest = recorded.get("honest") or sorted(recorded["digests"])
        recomputed = {}
        for org_id in honest:
            ledger = Ledger.open(org_id, str(run_dir / "ledgers" / org_id))
            try:
                recomputed[org_id] = ledger.state_digest()
            finally:
                ledger.close()
        agree = len(set(recomputed.values())) <= 1 and all(
            recomputed[o] == recorded["digests"].get(o) for o in honest
        )
        if not agree:
            logger.warning(f"Digests diverge in {run_dir}: {recomputed}")
        results[str(run_dir)] = agree
    return results


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CRDT ledger benchmark")
    parser.add_argument("--log-level", default=None, help="Logging level (default: LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run the experiments of a workload file")
    run.add_argument("--config", required=True, type=Path, help="Workload JSON file")
    run.add_argument("--seed", type=int, default=None, help="Override the seed of every configuration")
    run.add_argument("--reps", type=int, default=1, help="Repetitions per configuration")
    run.add_argument("--seed-stride", type=int, default=0, help="Seed increment between repetitions")
    run.add_argument("--out", type=Path, default=None, help="Output directory for tables and ledgers")

    verify = sub.add_parser("verify-ledger", help="Verify the hash chain of stored ledgers")
    verify.add_argument("--dir", required=True, type=Path, help="Ledger directory or a parent of several")

    converge = sub.add_parser("convergence-check", help="Compare state digests across organizations")
    converge.add_argument("--out", required=True, type=Path, help="Output directory of a run")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    if args.command == "run":
        try:
            configs = load_workloads(args.config)
        except ConfigError as e:
            logger.error(str(e))
            return 2
        if args.seed is not None:
            configs = [c.model_copy(update={"seed": args.seed}) for c in configs]
        try:
            summary = run_suite(configs, args.reps, args.out, args.seed_stride, keep_ledgers=args.out is not None)
        except SuiteError as e:
            logger.error(str(e), exc_info=True)
            return 1
        print(summary.to_string(index=False))
        return 0

    if args.command == "verify-ledger":
        dirs = ledger_dirs(args.dir)
        if not dirs:
            logger.error(f"No ledger found below {args.dir}")
            return 2
        failures = 0
        for path in dirs:
            ok = verify_ledger_dir(path)
            print(f"{'OK' if ok else 'TAMPERED'} {path}")
            failures += not ok
        return 1 if failures else 0

    if args.command == "convergence-check":
        try:
            results = convergence_report(args.out)
        except (CorruptLog, OSError, KeyError) as e:
            logger.error(f"Convergence check failed: {e}")
            return 2
        if not results:
            logger.error(f"No digests.json found below {args.out}")
            return 2
        for run_dir, agree in results.items():
            print(f"{'CONVERGED' if agree else 'DIVERGED'} {run_dir}")
        return 0 if all(results.values()) else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
