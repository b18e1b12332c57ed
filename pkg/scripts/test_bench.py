"""
Tests for workload files, metrics, experiment suites and the command line
"""
import json
import math
import random
import sys
from pathlib import Path

import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.bench.cli import main
from backend.bench.config import Application, WorkloadConfig, load_workloads, parse_workload
from backend.bench.experiment import Experiment, run_experiment
from backend.bench.metrics import MODIFY, READ, MetricsCollector, percentile
from backend.bench.suite import SuiteError, run_suite
from backend.crdt.operation import CrdtType
from backend.database.storage import LedgerStorage
from backend.settings import ConfigError

CONFIG_DIR = Path(__file__).parent.parent / "config"

SMALL = dict(
    name="small", application="Synthetic", arrival_rate=20, duration=2, drain=5,
    read_percent=25, modify_percent=75, num_orgs=4, policy_q=2, num_clients=5,
    object_universe=16, seed=11,
)


def small(**overrides) -> WorkloadConfig:
    return WorkloadConfig(**{**SMALL, **overrides})


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


# Metrics

def nearest_rank(values, p):
    ordered = sorted(values)
    return ordered[max(1, math.ceil(p / 100 * len(ordered))) - 1]


@pytest.mark.parametrize("n", [137, 1000])
@pytest.mark.parametrize("p", [1.55, 50.05, 99.95])
def test_percentile_is_nearest_rank(n, p):
    rng = random.Random(n)
    values = [rng.uniform(0, 500) for _ in range(n)]
    assert percentile(values, p) == nearest_rank(values, p)


def test_percentile_of_empty_sample():
    assert percentile([], 99) == 0.0


def test_report_counts_and_series():
    metrics = MetricsCollector()
    ok = metrics.submit(MODIFY, 0.2)
    metrics.finish(ok, 0.7, True, attempts=2)
    failed = metrics.submit(MODIFY, 0.5)
    metrics.finish(failed, 5.5, False, "Timeout")
    read = metrics.submit(READ, 1.1)
    metrics.finish(read, 1.2, True)
    metrics.submit(MODIFY, 1.9)

    report = metrics.report(elapsed=2.0, horizon=4.0)
    assert (report.submitted, report.committed, report.failed, report.in_flight) == (4, 2, 1, 1)
    assert report.modify_submitted == 3 and report.read_submitted == 1
    assert report.modify_committed == 1 and report.read_completed == 1
    assert report.throughput == 1.0
    assert report.modify_throughput == 0.5
    assert report.latency_avg_ms == pytest.approx(300.0)
    assert report.retries == 1
    assert report.throughput_series == [1, 1, 0, 0]
    assert report.failures_by_reason == {"Timeout": 1}
    assert report.summary_row()["failed_Timeout"] == 1


# Workload files

def test_shipped_workload_files_parse():
    for path in sorted(CONFIG_DIR.glob("*.json")):
        if path.name.startswith(("workload_", "sweep_", "scenario_")):
            assert load_workloads(path)


def test_sweep_defaults_apply_to_each_entry():
    configs = load_workloads(CONFIG_DIR / "sweep_orgs.json")
    assert [c.num_orgs for c in configs] == [8, 16, 24, 32]
    assert {c.seed for c in configs} == {5}
    assert all(c.application is Application.SYNTHETIC for c in configs)


@pytest.mark.parametrize("name, field, values", [
    ("sweep_arrival_rate", "arrival_rate", [100, 200, 400, 600, 800, 1000]),
    ("sweep_ops_per_obj", "ops_per_obj", [2, 4, 8, 16]),
    ("sweep_obj_count", "obj_count", [2, 4, 8, 16]),
    ("sweep_crdt_type", "crdt_type", [CrdtType.G_COUNTER, CrdtType.MV_REGISTER, CrdtType.CRDT_MAP]),
    ("sweep_workload_mix", "read_percent", [10, 30, 50, 70, 90]),
    ("sweep_gossip_ratio", "gossip_ratio", [1, 3, 7, 11, 15]),
    ("sweep_endorsement", "policy_q", [2, 4, 8, 12, 16]),
    ("sweep_voting_arrival_rate", "arrival_rate", [100, 200, 300, 400, 500]),
    ("sweep_auction_arrival_rate", "arrival_rate", [100, 200, 300, 400, 500]),
])
def test_each_sweep_varies_one_field(name, field, values):
    configs = load_workloads(CONFIG_DIR / f"{name}.json")
    assert [getattr(c, field) for c in configs] == values
    assert len({c.seed for c in configs}) == 1


def test_byzantine_sweep_adds_one_organization_at_a_time():
    configs = load_workloads(CONFIG_DIR / "sweep_byzantine_orgs.json")
    assert [len(c.byzantine.byzantine_orgs()) for c in configs] == [1, 2, 3]
    assert all(c.num_orgs == 16 and c.policy_q == 4 for c in configs)


def test_byzantine_file_is_resolved_next_to_the_workload():
    configs = load_workloads(CONFIG_DIR / "scenario_byzantine.json")
    assert [c.client_avoidance for c in configs] == [False, True]
    assert configs[0].byzantine.byzantine_orgs() == ["org-02", "org-05", "org-07"]


def test_type_aliases_in_workloads():
    config = parse_workload({**SMALL, "crdt_type": "Map"})
    assert config.crdt_type is CrdtType.CRDT_MAP


@pytest.mark.parametrize("overrides", [
    {"read_percent": 60, "modify_percent": 60},
    {"policy_q": 5},
    {"gossip_ratio": 4},
    {"obj_count": 17},
    {"arrival_rate": 0},
    {"colour": "blue"},
    {"byzantine": {"windows": {"org-09": [{"start": 0, "end": 1, "behaviors": ["DropProposals"]}]}}},
    {"byzantine": {"windows": {"org-01": [{"start": 0, "end": 99, "behaviors": ["DropProposals"]}]}}},
])
def test_invalid_workloads_are_config_errors(overrides):
    with pytest.raises(ConfigError):
        parse_workload({**SMALL, **overrides})


def test_unreadable_workload_files(tmp_path):
    with pytest.raises(ConfigError):
        load_workloads(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_workloads(bad)
    with pytest.raises(ConfigError):
        load_workloads(write_json(tmp_path / "list.json", [SMALL]))
    with pytest.raises(ConfigError):
        load_workloads(write_json(tmp_path / "byz.json", {**SMALL, "byzantine_file": "nowhere.json"}))


# Experiments

def test_equal_seeds_give_equal_reports():
    first = run_experiment(small())
    second = run_experiment(small())
    assert first == second
    assert first.trace_digest
    assert run_experiment(small(seed=12)).trace_digest != first.trace_digest


@pytest.mark.parametrize("application", list(Application))
def test_every_submission_is_accounted_for(application):
    report = run_experiment(small(application=application, drain=0.5))
    assert report.submitted == 40
    assert report.submitted == report.committed + report.failed + report.in_flight
    assert report.modify_submitted + report.read_submitted == report.submitted
    assert report.committed > 0


def test_zero_duration_gives_an_empty_report():
    report = run_experiment(small(duration=0, drain=0))
    assert report.submitted == 0
    assert report.throughput == 0.0
    assert report.throughput_series == []


def test_experiment_refuses_a_used_ledger_directory(tmp_path):
    experiment = Experiment(small(), tmp_path)
    experiment.run()
    experiment.close()
    with pytest.raises(ConfigError):
        Experiment(small(), tmp_path)


def test_digests_file(tmp_path):
    experiment = Experiment(small())
    try:
        experiment.run()
        experiment.quiesce(rounds=20)
        path = experiment.write_digests(tmp_path / "digests.json")
    finally:
        experiment.close()
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["honest"] == ["org-01", "org-02", "org-03", "org-04"]
    assert len(set(payload["digests"].values())) == 1
    assert payload["seed"] == 11


# Suites

def test_suite_writes_tables(tmp_path):
    configs = [small(name="a"), small(name="b", application="Voting", voters=20)]
    summary = run_suite(configs, repetitions=2, out_dir=tmp_path, seed_stride=1)
    assert list(summary["name"]) == ["a", "b"]
    assert (summary["submitted"] == 40).all()

    runs = pd.read_csv(tmp_path / "config-00" / "runs.csv")
    assert list(runs["seed"]) == [11, 12]
    assert (tmp_path / "summary.csv").exists()
    assert len(json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))) == 2


def test_suite_reports_the_failing_configuration(tmp_path):
    run_suite([small()], repetitions=1, out_dir=tmp_path, keep_ledgers=True)
    assert (tmp_path / "ledgers" / "org-01" / LedgerStorage.LOG_FILE).exists()
    assert (tmp_path / "digests.json").exists()
    with pytest.raises(SuiteError) as info:
        run_suite([small()], repetitions=1, out_dir=tmp_path, keep_ledgers=True)
    assert info.value.config_index == 0


def test_suite_needs_a_repetition():
    with pytest.raises(ValueError):
        run_suite([small()], repetitions=0)


# Command line

def test_cli_run_verify_and_check(tmp_path, capsys):
    workload = write_json(tmp_path / "workload.json", SMALL)
    out = tmp_path / "out"
    assert main(["run", "--config", str(workload), "--out", str(out)]) == 0
    assert "small" in capsys.readouterr().out

    assert main(["verify-ledger", "--dir", str(out)]) == 0
    assert capsys.readouterr().out.count("OK") == 4
    assert main(["convergence-check", "--out", str(out)]) == 0
    assert "CONVERGED" in capsys.readouterr().out

    log = out / "ledgers" / "org-01" / LedgerStorage.LOG_FILE
    data = bytearray(log.read_bytes())
    data[30] ^= 0x01
    log.write_bytes(bytes(data))
    assert main(["verify-ledger", "--dir", str(out / "ledgers" / "org-01")]) == 1
    assert "TAMPERED" in capsys.readouterr().out


def test_cli_seed_override(tmp_path, capsys):
    workload = write_json(tmp_path / "workload.json", SMALL)
    assert main(["run", "--config", str(workload), "--seed", "3", "--reps", "2", "--seed-stride", "2"]) == 0
    assert "small" in capsys.readouterr().out


def test_cli_usage_errors(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["verify-ledger", "--dir", str(tmp_path)]) == 2
    assert main(["convergence-check", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["launch"])
