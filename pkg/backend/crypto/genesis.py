"""
Genesis roster - static key distribution loaded at startup
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Tuple

from .identity import CryptoError, Identity, IdentityRegistry, KeyPair, Role, Signer

logger = logging.getLogger(__name__)


def derive_key_pair(seed: int, identity_id: str) -> KeyPair:
    """Deterministic key pair for simulated networks and reproducible rosters"""
    return KeyPair.from_seed(f"{seed}:{identity_id}".encode("utf-8"))


def generate_network(org_ids: Iterable[str], client_ids: Iterable[str],
                     seed: int = 0) -> Tuple[IdentityRegistry, Dict[str, Signer]]:
    """
    Build a roster and signing contexts for every member

    Args:
        org_ids: Organization identifiers
        client_ids: Client identifiers
        seed: Key derivation seed

    Returns:
        (registry, signer per id)
    """
    registry = IdentityRegistry()
    signers: Dict[str, Signer] = {}
    members = [(i, Role.ORGANIZATION) for i in org_ids] + [(i, Role.CLIENT) for i in client_ids]
    for identity_id, role in members:
        key_pair = derive_key_pair(seed, identity_id)
        identity = Identity(identity_id, key_pair.public_key, role)
        registry.register(identity)
        signers[identity_id] = Signer(identity, key_pair)
    logger.debug(f"Generated roster with {len(signers)} members (seed {seed})")
    return registry, signers


def write_genesis(path: Path, registry: IdentityRegistry) -> Path:
    """Write the roster as JSON: ``{"members": [{id, role, public_key}]}``"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    members = [
        {"id": identity.id, "role": identity.role.value, "public_key": identity.public_key.hex()}
        for identity in registry
    ]
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"members": members}, f, indent=2)
    logger.info(f"Genesis roster with {len(members)} members written to {path}")
    return path


def load_genesis(path: Path) -> IdentityRegistry:
    """
    Load a roster written by ``write_genesis``

    Raises:
        CryptoError: If the file is missing fields or has duplicate ids
    """
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    registry = IdentityRegistry()
    try:
        for member in data["members"]:
            registry.register(Identity(
                id=member["id"],
                public_key=bytes.fromhex(member["public_key"]),
                role=Role(member["role"]),
            ))
    except (KeyError, ValueError) as e:
        raise CryptoError(f"Invalid genesis file {path}: {e}") from e
    logger.info(f"Loaded genesis roster from {path}: {len(registry)} members")
    return registry
