"""
Transport-agnostic message frames

ProposeRequest→EndorsementResponse, CommitRequest→ReceiptResponse,
ReadRequest→ReadResponse and GossipPush→GossipAck. Frames encode to
canonical bytes with a one-byte type tag.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from ..crdt.codec import CodecError, Reader, Writer
from .messages import Endorsement, Proposal, Receipt, Transaction


@dataclass(frozen=True)
class ProposeRequest:
    request_id: str
    proposal: Proposal


@dataclass(frozen=True)
class EndorsementResponse:
    request_id: str
    org_id: str
    endorsement: Optional[Endorsement] = None
    error: str = ""


@dataclass(frozen=True)
class CommitRequest:
    request_id: str
    transaction: Transaction


@dataclass(frozen=True)
class ReceiptResponse:
    request_id: str
    org_id: str
    receipt: Receipt


@dataclass(frozen=True)
class ReadRequest:
    request_id: str
    proposal: Proposal


@dataclass(frozen=True)
class ReadResponse:
    request_id: str
    org_id: str
    value_json: str = "null"
    error: str = ""


@dataclass(frozen=True)
class GossipPush:
    sender_id: str
    transactions: Tuple[Transaction, ...]
    upto: int


@dataclass(frozen=True)
class GossipAck:
    sender_id: str
    upto: int


Frame = Union[ProposeRequest, EndorsementResponse, CommitRequest, ReceiptResponse,
              ReadRequest, ReadResponse, GossipPush, GossipAck]

_TAGS = {
    ProposeRequest: 1,
    EndorsementResponse: 2,
    CommitRequest: 3,
    ReceiptResponse: 4,
    ReadRequest: 5,
    ReadResponse: 6,
    GossipPush: 7,
    GossipAck: 8,
}


def encode_frame(frame: Frame) -> bytes:
    writer = Writer().u8(_TAGS[type(frame)])
    if isinstance(frame, (ProposeRequest, ReadRequest)):
        writer.text(frame.request_id)
        frame.proposal.write(writer)
    elif isinstance(frame, EndorsementResponse):
        writer.text(frame.request_id).text(frame.org_id).text(frame.error)
        if frame.endorsement is None:
            writer.u8(0)
        else:
            frame.endorsement.write(writer.u8(1))
    elif isinstance(frame, CommitRequest):
        writer.text(frame.request_id).blob(frame.transaction.canonical_bytes)
    elif isinstance(frame, ReceiptResponse):
        writer.text(frame.request_id).text(frame.org_id)
        frame.receipt.write(writer)
    elif isinstance(frame, ReadResponse):
        writer.text(frame.request_id).text(frame.org_id).text(frame.value_json).text(frame.error)
    elif isinstance(frame, GossipPush):
        writer.text(frame.sender_id).u64(frame.upto).u32(len(frame.transactions))
        for tx in frame.transactions:
            writer.blob(tx.canonical_bytes)
    elif isinstance(frame, GossipAck):
        writer.text(frame.sender_id).u64(frame.upto)
    return writer.getvalue()


def decode_frame(data: bytes) -> Frame:
    """
    Decode a frame produced by ``encode_frame``

    Raises:
        CodecError: On unknown tags, truncation or trailing bytes
    """
    reader = Reader(data)
    tag = reader.u8()
    if tag in (1, 5):
        request_id = reader.text()
        proposal = Proposal.read(reader)
        frame = ProposeRequest(request_id, proposal) if tag == 1 else ReadRequest(request_id, proposal)
    elif tag == 2:
        request_id, org_id, error = reader.text(), reader.text(), reader.text()
        endorsement = Endorsement.read(reader) if reader.u8() else None
        frame = EndorsementResponse(request_id, org_id, endorsement, error)
    elif tag == 3:
        frame = CommitRequest(reader.text(), Transaction.decode(reader.blob()))
    elif tag == 4:
        frame = ReceiptResponse(reader.text(), reader.text(), Receipt.read(reader))
    elif tag == 6:
        frame = ReadResponse(reader.text(), reader.text(), reader.text(), reader.text())
    elif tag == 7:
        sender_id, upto = reader.text(), reader.u64()
        txs = tuple(Transaction.decode(reader.blob()) for _ in range(reader.u32()))
        frame = GossipPush(sender_id, txs, upto)
    elif tag == 8:
        frame = GossipAck(reader.text(), reader.u64())
    else:
        raise CodecError(f"Unknown frame tag {tag}")
    reader.finish()
    return frame


def frame_size(frame: Frame) -> int:
    """Wire size in bytes, used by the bandwidth model"""
    if isinstance(frame, GossipPush):
        return 32 + sum(len(tx.canonical_bytes) + 4 for tx in frame.transactions)
    if isinstance(frame, CommitRequest):
        return 48 + len(frame.transaction.canonical_bytes)
    return len(encode_frame(frame))
