# Protocol messages shared by organizations, clients and the ledger
from .frames import (
    CommitRequest,
    EndorsementResponse,
    Frame,
    GossipAck,
    GossipPush,
    ProposeRequest,
    ReadRequest,
    ReadResponse,
    ReceiptResponse,
    decode_frame,
    encode_frame,
    frame_size,
)
from .messages import (
    Endorsement,
    EndorsementPolicy,
    Proposal,
    ReasonCode,
    Receipt,
    Transaction,
    Verdict,
    transaction_id,
)
