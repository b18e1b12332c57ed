"""
Identities, Ed25519 key pairs and write-set signing
"""
import hashlib
import logging
import threading
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Tuple

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

logger = logging.getLogger(__name__)

class CryptoError(ValueError):
    """Base class for identity errors"""


class UnknownIdentity(CryptoError):
    """Signer or verifier id is not in the roster"""


class Role(str, Enum):
    ORGANIZATION = "Organization"
    CLIENT = "Client"


@dataclass(frozen=True)
class Identity:
    """Public identity of an organization or client"""

    id: str
    public_key: bytes
    role: Role


@dataclass(frozen=True)
class Signature:
    """Signature by ``signer_id`` over a 32-byte digest"""

    signer_id: str
    bytes: bytes


def digest(payload: bytes) -> bytes:
    """SHA-256 of the canonical payload bytes"""
    return hashlib.sha256(payload).digest()


class KeyPair:
    """Ed25519 key pair; signing is deterministic"""

    def __init__(self, private_key: ed25519.Ed25519PrivateKey):
        self._private = private_key
        self.public_key = private_key.public_key().public_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PublicFormat.Raw,
        )

    @staticmethod
    def generate() -> "KeyPair":
        return KeyPair(ed25519.Ed25519PrivateKey.generate())

    @staticmethod
    def from_seed(seed: bytes) -> "KeyPair":
        """Derive a key pair from any seed bytes (hashed to 32 bytes)"""
        return KeyPair(ed25519.Ed25519PrivateKey.from_private_bytes(digest(seed)))

    @staticmethod
    def from_private_hex(value: str) -> "KeyPair":
        return KeyPair(ed25519.Ed25519PrivateKey.from_private_bytes(bytes.fromhex(value)))

    def private_hex(self) -> str:
        return self._private.private_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PrivateFormat.Raw,
            encryption_algorithm=serialization.NoEncryption(),
        ).hex()

    def sign_digest(self, value: bytes) -> bytes:
        return self._private.sign(value)


class Signer:
    """Immutable signing context: an identity plus its private key"""

    def __init__(self, identity: Identity, key_pair: KeyPair):
        if identity.public_key != key_pair.public_key:
            raise CryptoError(f"Key pair does not match the public key of {identity.id}")
        self.identity = identity
        self._key_pair = key_pair

    @property
    def id(self) -> str:
        return self.identity.id

    def private_hex(self) -> str:
        return self._key_pair.private_hex()

    def sign(self, payload: bytes) -> Tuple[bytes, Signature]:
        payload_digest = digest(payload)
        return payload_digest, Signature(self.id, self._key_pair.sign_digest(payload_digest))


@lru_cache(maxsize=65536)
def _verify_digest(public_key: bytes, payload_digest: bytes, signature: bytes) -> bool:
    # Pure function of its inputs, so results are shared by every verifier in the process
    try:
        ed25519.Ed25519PublicKey.from_public_bytes(public_key).verify(signature, payload_digest)
        return True
    except (InvalidSignature, ValueError):
        return False


class IdentityRegistry:
    """
    Network roster of known identities

    Messages are only accepted from ids registered here; verification is
    stateless and safe to share across threads.
    """

    def __init__(self, identities: Optional[Iterable[Identity]] = None):
        self._identities: Dict[str, Identity] = {}
        self._lock = threading.Lock()
        for identity in identities or []:
            self.register(identity)

    def register(self, identity: Identity) -> None:
        with self._lock:
            existing = self._identities.get(identity.id)
            if existing is not None and existing != identity:
                raise CryptoError(f"Identity {identity.id} already registered with another key")
            self._identities[identity.id] = identity

    def get(self, identity_id: str) -> Optional[Identity]:
        return self._identities.get(identity_id)

    def is_organization(self, identity_id: str) -> bool:
        identity = self._identities.get(identity_id)
        return identity is not None and identity.role is Role.ORGANIZATION

    def organizations(self) -> List[str]:
        return sorted(i.id for i in self._identities.values() if i.role is Role.ORGANIZATION)

    def clients(self) -> List[str]:
        return sorted(i.id for i in self._identities.values() if i.role is Role.CLIENT)

    def __iter__(self):
        return iter(sorted(self._identities.values(), key=lambda i: i.id))

    def __len__(self) -> int:
        return len(self._identities)

    def hash_and_sign(self, signer: Signer, payload: bytes) -> Tuple[bytes, Signature]:
        """
        Hash the canonical payload and sign the digest

        Args:
            signer: Registered signing context
            payload: Canonical bytes

        Returns:
            (32-byte digest, signature)

        Raises:
            UnknownIdentity: If the signer is not registered with this key
        """
        if self._identities.get(signer.id) != signer.identity:
            raise UnknownIdentity(f"Signer {signer.id} is not registered")
        return signer.sign(payload)

    def verify(self, signer_id: str, payload: bytes, signature: Signature) -> bool:
        """True iff ``signature`` is a valid signature by ``signer_id`` over the hash of ``payload``"""
        return self.verify_digest(signer_id, digest(payload), signature)

    def verify_digest(self, signer_id: str, payload_digest: bytes, signature: Signature) -> bool:
        identity = self._identities.get(signer_id)
        if identity is None or signature.signer_id != signer_id:
            return False
        return _verify_digest(identity.public_key, payload_digest, signature.bytes)
