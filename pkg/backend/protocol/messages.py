"""
Protocol types of the two-phase execute-commit lifecycle
"""
import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Optional, Tuple

from ..crdt.codec import CodecError, Reader, Writer, read_write_set, write_write_set
from ..crdt.operation import Operation
from ..crypto.identity import Signature


class Verdict(str, Enum):
    VALID = "Valid"
    INVALID = "Invalid"


class ReasonCode(str, Enum):
    """Why a transaction was judged Invalid"""

    POLICY_UNSATISFIED = "PolicyUnsatisfied"
    BAD_ENDORSEMENT_SIG = "BadEndorsementSig"
    BAD_CLIENT_SIG = "BadClientSig"
    DIGEST_MISMATCH = "DigestMismatch"
    DUPLICATE_ENDORSER = "DuplicateEndorser"


_VERDICT_TAGS = {Verdict.VALID: 1, Verdict.INVALID: 2}
_TAG_VERDICTS = {tag: verdict for verdict, tag in _VERDICT_TAGS.items()}
_REASON_TAGS = {reason: i + 1 for i, reason in enumerate(ReasonCode)}
_TAG_REASONS = {tag: reason for reason, tag in _REASON_TAGS.items()}


def write_verdict(writer: Writer, verdict: Verdict) -> Writer:
    return writer.u8(_VERDICT_TAGS[verdict])


def read_verdict(reader: Reader) -> Verdict:
    tag = reader.u8()
    if tag not in _TAG_VERDICTS:
        raise CodecError(f"Unknown verdict tag {tag}")
    return _TAG_VERDICTS[tag]


def write_signature(writer: Writer, signature: Optional[Signature]) -> Writer:
    if signature is None:
        return writer.u8(0)
    return writer.u8(1).text(signature.signer_id).blob(signature.bytes)


def read_signature(reader: Reader) -> Optional[Signature]:
    flag = reader.u8()
    if flag == 0:
        return None
    if flag != 1:
        raise CodecError(f"Invalid signature flag {flag}")
    return Signature(reader.text(), reader.blob())


@dataclass(frozen=True)
class EndorsementPolicy:
    """``{q of n}``: q of the n organizations must endorse and commit"""

    q: int
    n: int

    def __post_init__(self):
        if not 0 < self.q <= self.n:
            raise ValueError(f"Endorsement policy needs 0 < q <= n, got {{{self.q} of {self.n}}}")

    def tolerates_for_safety(self, faulty: int) -> bool:
        return self.q >= faulty + 1

    def tolerates_for_liveness(self, faulty: int) -> bool:
        return self.n - self.q >= faulty

    def __str__(self) -> str:
        return f"{{{self.q} of {self.n}}}"


@dataclass(frozen=True)
class Proposal:
    """Client request to execute a contract function"""

    proposal_id: str
    client_id: str
    client_clock: int
    contract_id: str
    function_name: str
    args: Tuple[bytes, ...]
    client_signature: Optional[Signature] = None

    def __post_init__(self):
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    @cached_property
    def signing_bytes(self) -> bytes:
        writer = Writer()
        writer.text(self.proposal_id).text(self.client_id).u64(self.client_clock)
        writer.text(self.contract_id).text(self.function_name)
        writer.u32(len(self.args))
        for arg in self.args:
            writer.blob(arg)
        return writer.getvalue()

    def write(self, writer: Writer) -> Writer:
        writer.blob(self.signing_bytes)
        return write_signature(writer, self.client_signature)

    @staticmethod
    def read(reader: Reader) -> "Proposal":
        body = Reader(reader.blob())
        proposal_id = body.text()
        client_id = body.text()
        clock = body.u64()
        contract_id = body.text()
        function_name = body.text()
        args = tuple(body.blob() for _ in range(body.u32()))
        body.finish()
        return Proposal(proposal_id, client_id, clock, contract_id, function_name, args,
                        read_signature(reader))


@dataclass(frozen=True)
class Endorsement:
    """An organization's signed write-set for a proposal"""

    org_id: str
    write_set: Tuple[Operation, ...]
    write_set_digest: bytes
    org_signature: Signature

    def __post_init__(self):
        if not isinstance(self.write_set, tuple):
            object.__setattr__(self, "write_set", tuple(self.write_set))

    def stripped(self) -> "Endorsement":
        """Copy without the write-set, as embedded in a transaction"""
        return replace(self, write_set=())

    def write(self, writer: Writer) -> Writer:
        writer.text(self.org_id)
        write_write_set(writer, self.write_set)
        writer.raw(self.write_set_digest)
        return write_signature(writer, self.org_signature)

    @staticmethod
    def read(reader: Reader) -> "Endorsement":
        org_id = reader.text()
        write_set = tuple(read_write_set(reader))
        write_set_digest = reader.raw(32)
        signature = read_signature(reader)
        if signature is None:
            raise CodecError(f"Endorsement from {org_id} carries no signature")
        return Endorsement(org_id, write_set, write_set_digest, signature)


def write_set_bytes(write_set: Tuple[Operation, ...]) -> bytes:
    return write_write_set(Writer(), write_set).getvalue()


def transaction_id(proposal: Proposal, write_set_digest: bytes) -> str:
    return hashlib.sha256(proposal.signing_bytes + write_set_digest).hexdigest()


@dataclass(frozen=True)
class Transaction:
    """Client-signed write-set plus the endorsements collected for it"""

    tx_id: str
    proposal: Proposal
    write_set: Tuple[Operation, ...]
    endorsements: Tuple[Endorsement, ...]
    client_signature: Optional[Signature] = None

    def __post_init__(self):
        if not isinstance(self.write_set, tuple):
            object.__setattr__(self, "write_set", tuple(self.write_set))
        if not isinstance(self.endorsements, tuple):
            object.__setattr__(self, "endorsements", tuple(self.endorsements))

    @cached_property
    def write_set_bytes(self) -> bytes:
        return write_set_bytes(self.write_set)

    @cached_property
    def write_set_digest(self) -> bytes:
        return hashlib.sha256(self.write_set_bytes).digest()

    @cached_property
    def canonical_bytes(self) -> bytes:
        writer = Writer().text(self.tx_id)
        self.proposal.write(writer)
        writer.raw(self.write_set_bytes)
        writer.u32(len(self.endorsements))
        for endorsement in self.endorsements:
            endorsement.write(writer)
        write_signature(writer, self.client_signature)
        return writer.getvalue()

    def object_ids(self) -> Tuple[str, ...]:
        return tuple(sorted({op.object_id for op in self.write_set}))

    @staticmethod
    def read(reader: Reader) -> "Transaction":
        tx_id = reader.text()
        proposal = Proposal.read(reader)
        write_set = tuple(read_write_set(reader))
        endorsements = tuple(Endorsement.read(reader) for _ in range(reader.u32()))
        return Transaction(tx_id, proposal, write_set, endorsements, read_signature(reader))

    @staticmethod
    def decode(data: bytes) -> "Transaction":
        reader = Reader(data)
        tx = Transaction.read(reader)
        reader.finish()
        return tx


@dataclass(frozen=True)
class Receipt:
    """Signed receipt (Valid) or rejection (Invalid) for a committed transaction"""

    tx_id: str
    org_id: str
    block_hash: bytes
    verdict: Verdict
    org_signature: Optional[Signature] = None
    reason: Optional[ReasonCode] = field(default=None)

    @staticmethod
    def signing_bytes_for(block_hash: bytes, verdict: Verdict) -> bytes:
        return write_verdict(Writer().raw(block_hash), verdict).getvalue()

    @property
    def signing_bytes(self) -> bytes:
        return Receipt.signing_bytes_for(self.block_hash, self.verdict)

    def write(self, writer: Writer) -> Writer:
        writer.text(self.tx_id).text(self.org_id).raw(self.block_hash)
        write_verdict(writer, self.verdict)
        write_signature(writer, self.org_signature)
        return writer.u8(_REASON_TAGS[self.reason] if self.reason else 0)

    @staticmethod
    def read(reader: Reader) -> "Receipt":
        tx_id = reader.text()
        org_id = reader.text()
        block_hash = reader.raw(32)
        verdict = read_verdict(reader)
        signature = read_signature(reader)
        tag = reader.u8()
        if tag and tag not in _TAG_REASONS:
            raise CodecError(f"Unknown reason tag {tag}")
        return Receipt(tx_id, org_id, block_hash, verdict, signature, _TAG_REASONS.get(tag))
