"""
Convergence tests: replicas agree after gossip whatever order they saw transactions in
"""
import random
import sys
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.bench.config import Application, WorkloadConfig, load_workloads
from backend.bench.experiment import Experiment
from backend.contracts import auction, voting
from backend.contracts.base import ExecutionContext
from backend.network.links import LinkModel
from testkit import ObjectsView

CONFIG_DIR = Path(__file__).parent.parent / "config"
ROUGH_LINKS = LinkModel(jitter_ms=10, loss_rate=0.05, duplicate_rate=0.05, reorder=True)


def small_config(application, seed=3, **overrides):
    fields = dict(
        name=f"converge-{application.value.lower()}", application=application,
        arrival_rate=40, duration=3, drain=10, read_percent=20, modify_percent=80,
        num_orgs=4, policy_q=2, num_clients=6, elections=2, parties=3, voters=30,
        auctions=2, bidders=30, object_universe=16, obj_count=2, link=ROUGH_LINKS, seed=seed,
    )
    fields.update(overrides)
    return WorkloadConfig(**fields)


@pytest.mark.parametrize("application", list(Application))
def test_replicas_converge_after_quiescence(application):
    experiment = Experiment(small_config(application))
    try:
        report = experiment.run()
        experiment.quiesce(rounds=40)
        assert report.modify_committed > 0
        assert len(set(experiment.state_digests().values())) == 1
        valid_sets = {frozenset(node.committed_valid()) for node in experiment.nodes.values()}
        assert len(valid_sets) == 1
        for node in experiment.nodes.values():
            assert node.ledger.verify_chain()
    finally:
        experiment.close()


def test_gossip_disabled_leaves_replicas_apart():
    experiment = Experiment(small_config(Application.SYNTHETIC, gossip_ratio=0, link=LinkModel()))
    try:
        experiment.run()
        experiment.quiesce(rounds=5)
        heights = {node.ledger.height for node in experiment.nodes.values()}
        assert len(heights) > 1
    finally:
        experiment.close()


def test_vote_tally_is_independent_of_delivery_order():
    fixture = voting.VotingFixture.numbered(elections=1, parties=4)
    rng = random.Random(11)
    clients = ["client-0000", "client-0001", "client-0002"]
    clocks = Counter()
    final_party = {}
    ops = []
    for _ in range(150):
        voter_index = rng.randrange(60)
        client = clients[voter_index % len(clients)]
        party = f"party-{rng.randrange(4)}"
        clocks[client] += 1
        ctx = ExecutionContext(client, clocks[client], (), None)
        ops.extend(voting.vote(fixture, ctx, f"voter-{voter_index}", party, "election-0"))
        final_party[voter_index] = party
    expected = Counter(final_party.values())

    for shuffle_seed in range(3):
        shuffled = list(ops)
        random.Random(shuffle_seed).shuffle(shuffled)
        view = ObjectsView()
        view.apply(shuffled)
        counts = {p: voting.read_vote_count(fixture, view, p, "election-0") for p in fixture.parties}
        assert counts == {p: expected.get(p, 0) for p in fixture.parties}
        assert sum(counts.values()) == len(final_party)


bids = st.lists(st.tuples(st.integers(0, 3), st.integers(1, 100)), min_size=1, max_size=25)


@settings(max_examples=100, deadline=None)
@given(bids=bids, rnd=st.randoms(use_true_random=False))
def test_highest_bid_only_grows_as_bids_arrive(bids, rnd):
    ops = [
        auction.bid(ExecutionContext("client-0000", clock, (), None), f"bidder-{who}", amount, "auction-0")[0]
        for clock, (who, amount) in enumerate(bids, start=1)
    ]
    rnd.shuffle(ops)
    view = ObjectsView()
    highest = 0
    for o in ops:
        view.apply([o])
        _, amount = auction.get_highest_bid(view, "auction-0")
        assert amount >= highest
        highest = amount

    totals = Counter()
    for who, amount in bids:
        totals[f"bidder-{who}"] += amount
    assert highest == max(totals.values())


@pytest.mark.slow
def test_clients_recover_from_staggered_byzantine_failures():
    no_avoidance, avoidance = load_workloads(CONFIG_DIR / "scenario_byzantine.json")
    results = {}
    for config in (no_avoidance, avoidance):
        experiment = Experiment(config)
        try:
            report = experiment.run()
            experiment.quiesce(rounds=40)
            honest = experiment.honest_org_ids()
            digests = experiment.state_digests()
            assert len({digests[o] for o in honest}) == 1
            results[config.name] = report
        finally:
            experiment.close()

    assert results["byzantine-no-avoidance"].committed < results["byzantine-avoidance"].committed

    # Faults start at 10, 20 and 30 seconds; arrivals stop at 40
    def means(series):
        return [sum(series[lo:hi]) / (hi - lo) for lo, hi in [(1, 9), (14, 20), (24, 30), (34, 39)]]

    baseline, *recovered = means(results["byzantine-avoidance"].throughput_series)
    for window in recovered:
        assert window >= 0.9 * baseline
    unguarded = means(results["byzantine-no-avoidance"].throughput_series)
    assert unguarded == sorted(unguarded, reverse=True)
    assert unguarded[-1] < 0.9 * unguarded[0]


@pytest.mark.slow
@pytest.mark.parametrize("application", list(Application))
@pytest.mark.parametrize("seed", range(20))
def test_lossy_network_converges_at_scale(application, seed):
    config = small_config(
        application, seed=seed, arrival_rate=30, duration=60, drain=60,
        num_orgs=8, policy_q=4, num_clients=40, voters=1000, bidders=1000, object_universe=64,
    )
    experiment = Experiment(config)
    try:
        report = experiment.run()
        experiment.quiesce(rounds=32)
        assert len(set(experiment.state_digests().values())) == 1
        valid_sets = {frozenset(node.committed_valid()) for node in experiment.nodes.values()}
        assert len(valid_sets) == 1
        assert "Exhausted" not in report.failures_by_reason
        assert report.modify_committed >= 0.9 * report.modify_submitted
    finally:
        experiment.close()


@pytest.mark.slow
def test_each_voter_counts_once_after_revotes():
    config = small_config(
        Application.VOTING, seed=17, arrival_rate=1, duration=0, drain=70,
        num_orgs=8, policy_q=4, num_clients=20, elections=1, parties=4, voters=1000,
    )
    experiment = Experiment(config)
    fixture = voting.VotingFixture.numbered(elections=1, parties=4)
    rng = random.Random(17)
    parties = [f"party-{p}" for p in range(config.parties)]

    def cast(at, client_id, voter, party):
        yield experiment.env.timeout(at)
        experiment.submit(client_id, voting.CONTRACT_ID, "vote",
                          (b"election-0", party.encode(), voter.encode()))

    # Voters are owned by one client; revotes come later from the same one
    for index in range(config.voters):
        voter = f"voter-{index:05d}"
        client_id = config.client_ids[index % config.num_clients]
        times = sorted(rng.uniform(0, 50) for _ in range(1 + rng.randint(0, 3)))
        for at in times:
            experiment.env.process(cast(at, client_id, voter, rng.choice(parties)))

    try:
        experiment.run()
        experiment.quiesce(rounds=32)
        for node in experiment.nodes.values():
            ballots = Counter()
            for party in parties:
                registers = node.ledger.read_object(voting.party_object_id("election-0", party)).value or {}
                for voter, survivors in registers.items():
                    if survivors and all(v == b"true" for v in survivors):
                        ballots[voter] += 1
            assert all(count == 1 for count in ballots.values())
            assert 0 < sum(ballots.values()) <= config.voters
            total = sum(voting.read_vote_count(fixture, node.ledger, p, "election-0") for p in parties)
            assert total == sum(ballots.values())
    finally:
        experiment.close()


@pytest.mark.slow
def test_throughput_holds_as_organizations_are_added():
    throughputs = []
    for config in load_workloads(CONFIG_DIR / "sweep_orgs.json"):
        experiment = Experiment(config)
        try:
            throughputs.append(experiment.run().throughput)
        finally:
            experiment.close()
    assert min(throughputs) > 0
    assert max(throughputs) / min(throughputs) - 1 < 0.15


@pytest.mark.slow
def test_latency_grows_with_endorsement_quorum():
    latencies = []
    for config in load_workloads(CONFIG_DIR / "sweep_endorsement.json"):
        experiment = Experiment(config)
        try:
            latencies.append(experiment.run().modify_latency_avg_ms)
        finally:
            experiment.close()
    for smaller, larger in zip(latencies, latencies[1:]):
        assert larger >= smaller - 0.5
    assert latencies[-1] > latencies[0]
