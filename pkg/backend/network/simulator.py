"""
Discrete-event network simulator (simpy)

Organizations are served by one simulated CPU each; messages cross links
modelled by ``LinkModel``; Byzantine schedules intercept frames on the way.
All randomness comes from seeded generators, so equal seeds give equal
event traces.
"""
import hashlib
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Set, Tuple

import simpy

from ..client.session import Broadcast, Steps
from ..crypto.identity import Signer
from ..node.org_node import OrgNode, peers_of
from ..protocol.frames import (
    CommitRequest,
    Frame,
    GossipAck,
    GossipPush,
    ProposeRequest,
    ReadRequest,
    frame_size,
)
from .byzantine import ByzantineSchedule, intercept
from .links import LinkModel, LinkState, deliver

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServiceTimes:
    """Simulated CPU seconds spent per frame at an organization"""

    endorse: float = 0.0008
    commit: float = 0.0008
    read: float = 0.0003

    def of(self, frame: Frame, node: Optional[OrgNode] = None) -> float:
        """Service time of a frame; gossip is charged only for transactions ``node`` lacks"""
        if isinstance(frame, ProposeRequest):
            return self.endorse
        if isinstance(frame, CommitRequest):
            return self.commit
        if isinstance(frame, ReadRequest):
            return self.read
        if isinstance(frame, GossipPush):
            fresh = [tx for tx in frame.transactions
                     if node is None or not node.ledger.has_transaction(tx.tx_id)]
            return self.commit * len(fresh)
        return 0.0


@dataclass
class _Collector:
    expected: Set[str]
    done: simpy.Event
    responses: Dict[str, Frame] = field(default_factory=dict)


def _frame_key(frame: Frame) -> str:
    if isinstance(frame, (GossipPush, GossipAck)):
        return f"{frame.sender_id}@{frame.upto}"
    return frame.request_id


class NetworkSimulator:
    """In-process network connecting organization nodes and client sessions"""

    def __init__(self, nodes: Mapping[str, OrgNode], link: Optional[LinkModel] = None, seed: int = 0,
                 schedule: Optional[ByzantineSchedule] = None,
                 signers: Optional[Mapping[str, Signer]] = None,
                 service_times: ServiceTimes = ServiceTimes(),
                 gossip_interval: float = 1.0, gossip_ratio: int = 1,
                 links: Optional[Mapping[Tuple[str, str], LinkModel]] = None,
                 env: Optional[simpy.Environment] = None):
        """
        Initialize the simulator

        Args:
            nodes: Organization nodes by id
            link: Default link model between any two endpoints
            seed: Seed of the link and Byzantine randomness
            schedule: Byzantine behaviour schedule
            signers: Organization signers, needed to re-sign corrupted endorsements
            service_times: CPU cost per frame
            gossip_interval: Seconds between gossip rounds
            gossip_ratio: Peers contacted per gossip round
            links: Per (src, dst) link overrides
            env: simpy environment to run in
        """
        self.env = env or simpy.Environment()
        self.nodes = dict(nodes)
        self.link = link or LinkModel()
        self.links = dict(links or {})
        self.schedule = schedule
        self.signers = dict(signers or {})
        self.service_times = service_times
        self.gossip_interval = gossip_interval
        self.gossip_ratio = gossip_ratio
        self.rng = random.Random(f"links:{seed}")
        self.byzantine_rng = random.Random(f"byzantine:{seed}")
        self.cpus = {org: simpy.Resource(self.env, capacity=1) for org in self.nodes}
        self.stats: Counter = Counter()
        self._link_states: Dict[Tuple[str, str], LinkState] = {}
        self._collectors: Dict[str, _Collector] = {}
        self._trace = hashlib.sha256()
        self.trace_length = 0
        self._gossip_started = False
        self._clients_muted = False

    @property
    def now(self) -> float:
        return self.env.now

    def _record(self, kind: str, src: str, dst: str, frame: Frame) -> None:
        entry = f"{self.env.now:.9f}|{kind}|{src}|{dst}|{type(frame).__name__}|{_frame_key(frame)}\n"
        self._trace.update(entry.encode("utf-8"))
        self.trace_length += 1
        self.stats[kind] += 1

    def trace_digest(self) -> str:
        return self._trace.copy().hexdigest()

    def link_for(self, src: str, dst: str) -> LinkModel:
        return self.links.get((src, dst), self.link)

    def send(self, src: str, dst: str, frame: Frame) -> None:
        """Put a frame on the link from ``src`` to ``dst``"""
        if self._clients_muted and (src not in self.nodes or dst not in self.nodes):
            self._record("muted", src, dst, frame)
            return
        if self.schedule is not None:
            forwarded = intercept(frame, src, dst, self.schedule, self.env.now, self.byzantine_rng, self.signers)
            if forwarded is None:
                self._record("byzantine-drop", src, dst, frame)
                return
            frame = forwarded
        state = self._link_states.setdefault((src, dst), LinkState())
        times = deliver(frame_size(frame), self.link_for(src, dst), self.rng, self.env.now, state)
        self._record("send", src, dst, frame)
        if not times:
            self._record("lost", src, dst, frame)
        for at in times:
            self.env.process(self._deliver(at - self.env.now, src, dst, frame))

    def _deliver(self, delay: float, src: str, dst: str, frame: Frame):
        yield self.env.timeout(delay)
        self._record("recv", src, dst, frame)
        node = self.nodes.get(dst)
        if node is None:
            self._on_client_frame(frame)
            return
        with self.cpus[dst].request() as slot:
            yield slot
            service = self.service_times.of(frame, node)
            if service > 0:
                yield self.env.timeout(service)
            response = node.handle(frame)
        if response is not None:
            self.send(dst, src, response)

    # Gossip

    def start_gossip(self) -> None:
        if self._gossip_started:
            return
        self._gossip_started = True
        for org_id in sorted(self.nodes):
            self.env.process(self._gossip_loop(org_id))

    def _gossip_loop(self, org_id: str):
        node = self.nodes[org_id]
        peers = peers_of(org_id, self.nodes)
        ratio = min(self.gossip_ratio, len(peers))
        while True:
            yield self.env.timeout(self.gossip_interval)
            if ratio > 0:
                node.gossip_round(peers, ratio, lambda dst, frame: self.send(org_id, dst, frame))

    # Client sessions

    def _on_client_frame(self, frame: Frame) -> None:
        collector = self._collectors.get(getattr(frame, "request_id", ""))
        org_id = getattr(frame, "org_id", None)
        if collector is None or org_id not in collector.expected:
            return
        collector.responses.setdefault(org_id, frame)
        if len(collector.responses) == len(collector.expected) and not collector.done.triggered:
            collector.done.succeed()

    def _broadcast(self, client_id: str, request: Broadcast):
        request_id = next(iter(request.frames.values())).request_id
        collector = _Collector(set(request.frames), self.env.event())
        self._collectors[request_id] = collector
        for dst in sorted(request.frames):
            self.send(client_id, dst, request.frames[dst])
        yield self.env.any_of([collector.done, self.env.timeout(request.timeout)])
        del self._collectors[request_id]
        return dict(collector.responses)

    def drive(self, client_id: str, steps: Steps):
        """
        simpy process body running client session steps to completion

        Use with ``yield from`` inside another process, or wrap in
        ``env.process``. Returns the value the steps return.
        """
        try:
            request = next(steps)
            while True:
                responses = yield from self._broadcast(client_id, request)
                request = steps.send(responses)
        except StopIteration as stop:
            return stop.value

    def mute_clients(self) -> None:
        """Drop all client traffic from now on; organizations keep gossiping"""
        self._clients_muted = True

    def run(self, until: Optional[float] = None) -> None:
        self.env.run(until=until)

    def run_rounds(self, rounds: int) -> None:
        """Advance time by ``rounds`` gossip intervals plus one for in-flight messages"""
        self.start_gossip()
        self.env.run(until=self.env.now + (rounds + 1) * self.gossip_interval)
