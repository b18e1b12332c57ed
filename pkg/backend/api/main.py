"""
FastAPI server exposing one organization node
"""
import logging
import threading
from pathlib import Path
from typing import List, Optional, Tuple, Type

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from backend.api.models import ErrorResponse, FrameRequest, FrameResponse, HealthResponse, LedgerStatus, ObjectResponse
from backend.contracts.base import default_registry, to_json_value
from backend.crdt.codec import CodecError
from backend.crypto.genesis import derive_key_pair, load_genesis
from backend.crypto.identity import CryptoError, KeyPair, Signer
from backend.database.ledger import Ledger
from backend.network.http_transport import HttpTransport, frame_from_hex, frame_to_hex
from backend.node.org_node import OrgNode
from backend.protocol.frames import CommitRequest, Frame, GossipPush, ProposeRequest, ReadRequest
from backend.protocol.messages import EndorsementPolicy
from backend.settings import ConfigError, Settings, configure_logging

logger = logging.getLogger(__name__)


def build_node(settings: Settings) -> OrgNode:
    """
    Build the organization node described by the settings

    Raises:
        ConfigError: If the genesis roster or the key is unusable
    """
    genesis = Path(settings.genesis_path)
    if not genesis.exists():
        raise ConfigError(f"Genesis file {genesis} not found; create it with scripts/make_genesis.py")
    try:
        registry = load_genesis(genesis)
        identity = registry.get(settings.node_id)
        if identity is None:
            raise ConfigError(f"{settings.node_id} is not in the genesis roster {genesis}")
        key_pair = (KeyPair.from_private_hex(settings.node_key_hex) if settings.node_key_hex
                    else derive_key_pair(settings.genesis_seed, settings.node_id))
        signer = Signer(identity, key_pair)
    except (CryptoError, ValueError) as e:
        raise ConfigError(f"Cannot set up identity of {settings.node_id}: {e}") from e
    policy = EndorsementPolicy(settings.policy_q, settings.policy_n)
    ledger = Ledger.open(settings.node_id, settings.ledger_dir)
    logger.info(f"Organization {settings.node_id} ready with policy {policy}, ledger height {ledger.height}")
    return OrgNode(signer, registry, policy, default_registry(), ledger)


class GossipLoop:
    """Background thread running gossip rounds over HTTP"""

    def __init__(self, node: OrgNode, transport: HttpTransport, interval: float, ratio: int):
        self.node = node
        self.transport = transport
        self.interval = interval
        self.ratio = ratio
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _send(self, peer: str, frame: Frame) -> None:
        ack = self.transport.send(peer, frame)
        if ack is not None:
            self.node.handle(ack)

    def run_once(self) -> None:
        peers = sorted(self.transport.peers)
        if peers:
            self.node.gossip_round(peers, min(self.ratio, len(peers)), self._send)

    def _run(self) -> None:
        while not self._stop.wait(self.interval):
            try:
                self.run_once()
            except Exception as e:
                logger.error(f"Gossip round failed: {e}", exc_info=True)

    def start(self) -> None:
        if self._thread is None:
            self._thread = threading.Thread(target=self._run, name="gossip", daemon=True)
            self._thread.start()
            logger.info(f"Gossip loop started: every {self.interval}s to {self.ratio} peer(s)")

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=self.interval + 1)


def create_app(node: Optional[OrgNode] = None, settings: Optional[Settings] = None,
               start_gossip: bool = True) -> FastAPI:
    """
    Create the organization server

    Args:
        node: Node to serve; built lazily from settings when None
        settings: Settings; read from the environment when None
        start_gossip: Run the background gossip loop at startup
    """
    app = FastAPI(
        title="CRDT Ledger Organization API",
        description="Endorse, commit, read and gossip endpoints of one organization",
        version="1.0.0",
    )
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    state = {"node": node, "error": None, "gossip": None}

    def get_settings() -> Settings:
        nonlocal settings
        if settings is None:
            settings = Settings.from_env()
        return settings

    def get_org_node() -> Optional[OrgNode]:
        """Get or initialize the node (lazy loading)"""
        if state["node"] is None:
            try:
                state["node"] = build_node(get_settings())
                state["error"] = None
            except (ConfigError, OSError) as e:
                logger.error(f"Error initializing organization node: {e}", exc_info=True)
                state["error"] = str(e)
        return state["node"]

    def require_node() -> OrgNode:
        org_node = get_org_node()
        if org_node is None:
            raise HTTPException(status_code=503, detail=state["error"] or "Organization node not initialized")
        return org_node

    def handle_frame(request: FrameRequest, expected: Tuple[Type, ...]) -> FrameResponse:
        org_node = require_node()
        try:
            frame = frame_from_hex(request.frame)
        except CodecError as e:
            raise HTTPException(status_code=400, detail=f"Malformed frame: {e}")
        if not isinstance(frame, expected):
            raise HTTPException(status_code=400, detail=f"Unexpected frame {type(frame).__name__}")
        return FrameResponse(frame=frame_to_hex(org_node.handle(frame)))

    @app.on_event("startup")
    async def startup_event():
        """Initialize the node and start gossiping"""
        org_node = get_org_node()
        current = get_settings()
        if start_gossip and org_node is not None and current.peers:
            transport = HttpTransport(current.peers, timeout=current.receipt_timeout)
            state["gossip"] = GossipLoop(org_node, transport, current.gossip_interval, current.gossip_ratio)
            state["gossip"].start()

    @app.on_event("shutdown")
    async def shutdown_event():
        if state["gossip"] is not None:
            state["gossip"].stop()
        if state["node"] is not None:
            state["node"].ledger.close()

    @app.get("/api/", response_model=dict)
    async def api_root():
        """API root"""
        return {
            "message": "CRDT Ledger Organization API",
            "version": "1.0.0",
            "endpoints": {
                "/api/propose": "POST - Endorse a proposal (ProposeRequest frame)",
                "/api/commit": "POST - Validate and commit a transaction (CommitRequest frame)",
                "/api/read": "POST - Run a read function (ReadRequest frame)",
                "/api/gossip": "POST - Receive gossiped transactions (GossipPush frame)",
                "/api/objects/{object_id}": "GET - Committed object state",
                "/api/ledger": "GET - Hash chain status",
                "/api/health": "GET - Health check",
            },
        }

    @app.post("/api/propose", response_model=FrameResponse, responses={400: {"model": ErrorResponse}})
    def propose(request: FrameRequest):
        return handle_frame(request, (ProposeRequest,))

    @app.post("/api/commit", response_model=FrameResponse, responses={400: {"model": ErrorResponse}})
    def commit(request: FrameRequest):
        return handle_frame(request, (CommitRequest,))

    @app.post("/api/read", response_model=FrameResponse, responses={400: {"model": ErrorResponse}})
    def read(request: FrameRequest):
        return handle_frame(request, (ReadRequest,))

    @app.post("/api/gossip", response_model=FrameResponse, responses={400: {"model": ErrorResponse}})
    def gossip(request: FrameRequest):
        return handle_frame(request, (GossipPush,))

    @app.get("/api/objects/{object_id:path}", response_model=ObjectResponse)
    def get_object(object_id: str, path: List[str] = Query(default=[], description="Path segments")):
        """
        Read committed state

        Args:
            object_id: CRDT object id
            path: Location inside the object
        """
        result = require_node().ledger.read_object(object_id, path)
        return ObjectResponse(
            object_id=object_id,
            found=result.found,
            kind=result.kind.value if result.kind else None,
            value=to_json_value(result.value),
        )

    @app.get("/api/ledger", response_model=LedgerStatus)
    def ledger_status():
        ledger = require_node().ledger
        return LedgerStatus(
            height=ledger.height,
            head_hash=ledger.head_hash.hex(),
            chain_valid=ledger.verify_chain(),
            valid_transactions=len(ledger.valid_tx_ids),
        )

    @app.get("/api/health", response_model=HealthResponse)
    def health_check():
        """
        Health check endpoint

        Returns:
            HealthResponse with node status
        """
        org_node = get_org_node()
        if org_node is None:
            return HealthResponse(status="degraded", node_initialized=False)
        return HealthResponse(
            status="healthy",
            node_initialized=True,
            node_id=org_node.org_id,
            policy=str(org_node.policy),
            height=org_node.ledger.height,
            peers=dict(get_settings().peers),
        )

    @app.exception_handler(Exception)
    async def global_exception_handler(request, exc):
        """Global exception handler"""
        logger.error(f"Unhandled exception: {exc}", exc_info=True)
        return JSONResponse(
            status_code=500,
            content={"error": "Internal server error", "detail": str(exc)}
        )

    return app


configure_logging()
app = create_app()
