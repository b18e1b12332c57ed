"""
Pydantic models for API request/response validation
"""
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field


class FrameRequest(BaseModel):
    """Request carrying one canonical frame"""
    frame: str = Field(..., description="Hex-encoded canonical frame bytes", min_length=2)


class FrameResponse(BaseModel):
    """Response frame; absent for frames that need no answer"""
    frame: Optional[str] = Field(None, description="Hex-encoded canonical frame bytes")


class ObjectResponse(BaseModel):
    """Committed state of one CRDT object location"""
    object_id: str
    found: bool
    kind: Optional[str] = None
    value: Any = None


class LedgerStatus(BaseModel):
    """Hash chain status of the organization's ledger"""
    height: int
    head_hash: str
    chain_valid: bool
    valid_transactions: int


class HealthResponse(BaseModel):
    """Response model for health check"""
    status: str
    version: str = "1.0.0"
    node_initialized: bool
    node_id: Optional[str] = None
    policy: Optional[str] = None
    height: int = 0
    peers: Dict[str, str] = Field(default_factory=dict)


class ErrorResponse(BaseModel):
    """Error response model"""
    error: str
    detail: Optional[str] = None
