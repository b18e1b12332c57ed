"""
One benchmark experiment over the simulated network
"""
import json
import logging
import random
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..client.session import ClientSession, Exhausted, Failed, ReadValue
from ..contracts import auction, synthetic, voting
from ..contracts.base import default_registry
from ..crypto.genesis import generate_network
from ..database.ledger import Ledger
from ..database.storage import LedgerStorage
from ..network.simulator import NetworkSimulator, ServiceTimes
from ..node.org_node import OrgNode
from ..settings import ConfigError
from .config import Application, WorkloadConfig
from .metrics import MODIFY, READ, MetricsCollector, MetricsReport

logger = logging.getLogger(__name__)

Request = Tuple[str, str, str, Tuple[bytes, ...]]


def _args(*values) -> Tuple[bytes, ...]:
    return tuple(str(v).encode("utf-8") for v in values)


class Experiment:
    """
    Network, sessions and workload of one run

    Everything random is derived from ``config.seed``; two experiments built
    from equal configs produce equal reports and event traces.
    """

    def __init__(self, config: WorkloadConfig, ledger_dir: Optional[Path] = None):
        """
        Build the network

        Args:
            config: Workload configuration
            ledger_dir: Persist each organization's ledger under ``ledger_dir/<org_id>``
        """
        self.config = config
        seed = config.seed
        self.registry, self.signers = generate_network(config.org_ids, config.client_ids, seed)
        self.contracts = default_registry(config.elections, config.parties, config.object_universe)
        self.ledger_dir = Path(ledger_dir) if ledger_dir is not None else None
        if self.ledger_dir is not None and any(self.ledger_dir.glob(f"*/{LedgerStorage.LOG_FILE}")):
            raise ConfigError(f"{self.ledger_dir} already holds ledgers; choose an empty output directory")

        self.nodes: Dict[str, OrgNode] = {}
        for org_id in config.org_ids:
            storage = LedgerStorage(str(self.ledger_dir / org_id)) if self.ledger_dir else None
            ledger = Ledger(org_id, storage, config.cache_capacity)
            self.nodes[org_id] = OrgNode(
                self.signers[org_id], self.registry, config.policy, self.contracts, ledger,
                rng=random.Random(f"gossip:{seed}:{org_id}"),
            )

        self.simulator = NetworkSimulator(
            self.nodes, config.link, seed,
            schedule=config.byzantine,
            signers={org: self.signers[org] for org in config.org_ids},
            service_times=ServiceTimes(
                config.service_endorse_ms / 1000, config.service_commit_ms / 1000, config.service_read_ms / 1000
            ),
            gossip_interval=config.gossip_interval,
            gossip_ratio=config.gossip_ratio,
        )
        self.env = self.simulator.env

        shared = Counter() if config.shared_suspicion else None
        self.sessions: Dict[str, ClientSession] = {
            client_id: ClientSession(
                self.signers[client_id], self.registry, config.org_ids, config.policy,
                rng=random.Random(f"client:{seed}:{client_id}"),
                endorse_timeout=config.endorse_timeout,
                receipt_timeout=config.receipt_timeout,
                suspicion=shared if shared is not None else Counter(),
                suspicion_threshold=config.suspicion_threshold,
                max_attempts=config.max_attempts,
                avoidance=config.client_avoidance,
                suspicion_decay=config.suspicion_decay,
                suspicion_forgiveness=config.suspicion_forgiveness,
            )
            for client_id in config.client_ids
        }
        self.client_ids = config.client_ids
        self.workload_rng = random.Random(f"workload:{seed}")
        self.metrics = MetricsCollector()
        self.report: Optional[MetricsReport] = None

    # Workload

    def _owned(self, client_index: int, population: int) -> int:
        """Pick a voter/bidder owned by the client so each one has a single session"""
        owned = range(client_index % population, population, self.config.num_clients)
        return self.workload_rng.choice(owned) if len(owned) else client_index % population

    def next_request(self, client_index: int) -> Request:
        """(kind, contract_id, function_name, args) for the next arrival"""
        cfg = self.config
        rng = self.workload_rng
        kind = READ if rng.random() * 100 < cfg.read_percent else MODIFY

        if cfg.application is Application.VOTING:
            election = f"election-{rng.randrange(cfg.elections)}"
            party = f"party-{rng.randrange(cfg.parties)}"
            if kind == READ:
                return kind, voting.CONTRACT_ID, "read_vote_count", _args(election, party)
            voter = f"voter-{self._owned(client_index, cfg.voters):05d}"
            return kind, voting.CONTRACT_ID, "vote", _args(election, party, voter)

        if cfg.application is Application.AUCTION:
            auction_id = f"auction-{rng.randrange(cfg.auctions)}"
            if kind == READ:
                return kind, auction.CONTRACT_ID, "get_highest_bid", _args(auction_id)
            bidder = f"bidder-{self._owned(client_index, cfg.bidders):05d}"
            amount = rng.randint(1, cfg.max_bid_increase)
            return kind, auction.CONTRACT_ID, "bid", _args(auction_id, bidder, amount)

        offset = rng.randrange(cfg.object_universe)
        if kind == READ:
            return kind, synthetic.CONTRACT_ID, "read", _args(cfg.obj_count, cfg.crdt_type.value, offset)
        return kind, synthetic.CONTRACT_ID, "modify", _args(
            cfg.obj_count, cfg.ops_per_obj, cfg.crdt_type.value, offset
        )

    def _transaction(self, client_id: str, request: Request):
        kind, contract_id, function_name, args = request
        session = self.sessions[client_id]
        record = self.metrics.submit(kind, self.env.now)
        ok, reason, attempts = False, None, 1
        try:
            if kind == READ:
                result = yield from self.simulator.drive(client_id, session.read_steps(contract_id, function_name, args))
                if isinstance(result, ReadValue):
                    ok, reason = not result.error, result.error or None
                else:
                    reason = result.reason.value
            else:
                steps = (session.submit_with_retry_steps(contract_id, function_name, args)
                         if self.config.client_avoidance
                         else session.submit_steps(contract_id, function_name, args))
                result = yield from self.simulator.drive(client_id, steps)
                attempts = result.attempts
                if isinstance(result, Failed):
                    reason = result.reason.value
                else:
                    ok = True
        except Exhausted as e:
            logger.debug(f"{client_id}: {e}")
            reason = "Exhausted"
        self.metrics.finish(record, self.env.now, ok, reason, attempts)

    def _arrivals(self):
        cfg = self.config
        total = int(round(cfg.arrival_rate * cfg.duration))
        for i in range(total):
            at = i / cfg.arrival_rate
            if at > self.env.now:
                yield self.env.timeout(at - self.env.now)
            client_index = self.workload_rng.randrange(cfg.num_clients)
            request = self.next_request(client_index)
            self.env.process(self._transaction(self.client_ids[client_index], request))

    def submit(self, client_id: str, contract_id: str, function_name: str, args: Tuple[bytes, ...]):
        """Schedule one modify transaction from a given client (scripted scenarios)"""
        return self.env.process(self._transaction(client_id, (MODIFY, contract_id, function_name, args)))

    # Running

    def run(self) -> MetricsReport:
        """Run arrivals plus the drain period and report"""
        cfg = self.config
        logger.info(
            f"Experiment {cfg.name} (seed {cfg.seed}): {cfg.application.value}, {cfg.arrival_rate} tps "
            f"for {cfg.duration}s, {cfg.num_orgs} orgs, policy {cfg.policy}"
        )
        self.simulator.start_gossip()
        self.env.process(self._arrivals())
        if cfg.horizon > 0:
            self.simulator.run(until=cfg.horizon)
        self.report = self.metrics.report(cfg.duration, cfg.horizon, self.simulator.trace_digest())
        logger.info(
            f"Experiment {cfg.name} finished: {self.report.committed}/{self.report.submitted} committed, "
            f"{self.report.throughput:.1f} tps, avg latency {self.report.latency_avg_ms:.1f} ms"
        )
        return self.report

    def quiesce(self, rounds: int = 32) -> None:
        """Cut client traffic and let gossip run for ``rounds`` more rounds"""
        self.simulator.mute_clients()
        self.simulator.run_rounds(rounds)

    def honest_org_ids(self) -> List[str]:
        byzantine = set(self.config.byzantine.byzantine_orgs()) if self.config.byzantine else set()
        return [org for org in self.config.org_ids if org not in byzantine]

    def state_digests(self) -> Dict[str, str]:
        return {org: node.state_digest() for org, node in self.nodes.items()}

    def write_digests(self, path: Path) -> Path:
        """Record state digests and valid transaction counts for later convergence checks"""
        payload = {
            "seed": self.config.seed,
            "honest": self.honest_org_ids(),
            "digests": self.state_digests(),
            "valid_transactions": {org: len(node.ledger.valid_tx_ids) for org, node in self.nodes.items()},
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        logger.info(f"State digests written to {path}")
        return path

    def close(self) -> None:
        for node in self.nodes.values():
            node.ledger.close()


def run_experiment(config: WorkloadConfig, ledger_dir: Optional[Path] = None) -> MetricsReport:
    experiment = Experiment(config, ledger_dir)
    try:
        return experiment.run()
    finally:
        experiment.close()
