"""Directory-backed keystore: PEM files named by principal id."""

from __future__ import annotations

from pathlib import Path

from . import crypto


class UnknownPrincipal(Exception):
    pass


class Keystore:
    """`<id>.key.pem` holds a private key, `<id>.pub.pem` the public half.

    Nodes hold their own private key plus the public keys of registered
    clients; key distribution beyond "copy files into the directory" is
    out of scope.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def generate(self, principal: str):
        """Create and persist a keypair; returns the private key."""
        key = crypto.generate_keypair()
        (self.directory / f"{principal}.key.pem").write_bytes(crypto.private_key_pem(key))
        (self.directory / f"{principal}.pub.pem").write_bytes(crypto.public_key_pem(key))
        return key

    def has_public(self, principal: str) -> bool:
        return (self.directory / f"{principal}.pub.pem").exists()

    def public_key(self, principal: str):
        path = self.directory / f"{principal}.pub.pem"
        if not path.exists():
            raise UnknownPrincipal(principal)
        return crypto.load_public_key(path.read_bytes())

    def private_key(self, principal: str):
        path = self.directory / f"{principal}.key.pem"
        if not path.exists():
            raise UnknownPrincipal(principal)
        return crypto.load_private_key(path.read_bytes())

    def principals(self) -> list[str]:
        return sorted(p.name[:-8] for p in self.directory.glob("*.pub.pem"))
