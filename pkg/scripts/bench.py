"""
Benchmark command line: run, verify-ledger, convergence-check

Examples:
    python scripts/bench.py run --config config/workload_synthetic.json --reps 3 --out results/synthetic
    python scripts/bench.py verify-ledger --dir results/synthetic/ledgers
    python scripts/bench.py convergence-check --out results/synthetic
"""
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.bench.cli import main

if __name__ == "__main__":
    sys.exit(main())
