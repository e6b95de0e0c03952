"""Client authentication: node-issued nonce, signed hello, replay defense."""

from __future__ import annotations

import base64
import os

from . import crypto
from .keystore import Keystore, UnknownPrincipal


class AuthFailure(Exception):
    pass


def issue_nonce() -> str:
    return base64.b64encode(os.urandom(16)).decode()


def hello_payload(client_id: str, nonce: str) -> bytes:
    return f"{client_id}|{nonce}".encode()


def make_hello(client_id: str, nonce: str, private_key) -> dict:
    """Client side: sign the node's nonce together with our identity."""
    signature = crypto.sign(hello_payload(client_id, nonce), private_key)
    return {
        "clientId": client_id,
        "nonce": nonce,
        "signature": base64.b64encode(signature).decode(),
    }


def authenticate_client(hello: dict, keystore: Keystore, expected_nonce: str) -> str:
    """Node side: verify the hello; returns the bound clientId.

    Rejects unknown keys, bad signatures, and replays (stale nonce).
    """
    client_id = hello.get("clientId", "")
    nonce = hello.get("nonce", "")
    if nonce != expected_nonce:
        raise AuthFailure("stale or missing nonce")
    try:
        public = keystore.public_key(client_id)
    except UnknownPrincipal:
        raise AuthFailure(f"unknown client key {client_id!r}") from None
    try:
        signature = base64.b64decode(hello.get("signature", ""))
    except Exception:
        raise AuthFailure("malformed signature") from None
    if not crypto.verify(hello_payload(client_id, nonce), signature, public):
        raise AuthFailure("signature verification failed")
    return client_id
