"""
Write a genesis roster for an HTTP deployment

Keys are derived from the seed, so each organization server can recreate its
own private key from GENESIS_SEED instead of NODE_KEY_HEX.
"""
import argparse
import logging
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.crypto.genesis import generate_network, write_genesis
from backend.settings import configure_logging

logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Generate a genesis roster")
    parser.add_argument("--orgs", type=int, default=4, help="Number of organizations")
    parser.add_argument("--clients", type=int, default=4, help="Number of clients")
    parser.add_argument("--seed", type=int, default=0, help="Key derivation seed")
    parser.add_argument("--out", type=Path, default=Path("config/genesis.json"))
    parser.add_argument("--print-keys", action="store_true", help="Print private keys as hex")
    args = parser.parse_args()

    configure_logging()
    org_ids = [f"org-{i:02d}" for i in range(1, args.orgs + 1)]
    client_ids = [f"client-{i:04d}" for i in range(args.clients)]
    registry, signers = generate_network(org_ids, client_ids, args.seed)
    write_genesis(args.out, registry)
    if args.print_keys:
        for identity_id, signer in sorted(signers.items()):
            print(f"{identity_id} {signer.private_hex()}")


if __name__ == "__main__":
    main()
