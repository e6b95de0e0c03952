"""Signing and encryption for client/node messages.

ECDSA over SECP256R1 with SHA-256 for signatures; encryption is a hybrid
scheme: ephemeral ECDH on the same curve, HKDF-SHA256 key derivation, and
AES-256-GCM for the payload. Envelopes sign the plaintext and encrypt it
to the recipient, so tampering either field is always detected.
"""

from __future__ import annotations

import base64
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

CURVE = ec.SECP256R1()
_POINT_LEN = 65   # uncompressed SECP256R1 point
_NONCE_LEN = 12
_HKDF_INFO = b"constellation-ecies-v1"


class CryptoError(Exception):
    pass


class MalformedKey(CryptoError):
    pass


class DecryptionFailure(CryptoError):
    pass


class VerificationFailure(CryptoError):
    pass


def generate_keypair() -> ec.EllipticCurvePrivateKey:
    return ec.generate_private_key(CURVE)


def private_key_pem(key: ec.EllipticCurvePrivateKey) -> bytes:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )


def public_key_pem(key) -> bytes:
    public = key.public_key() if isinstance(key, ec.EllipticCurvePrivateKey) else key
    return public.public_bytes(
        serialization.Encoding.PEM,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    )


def load_private_key(pem: bytes) -> ec.EllipticCurvePrivateKey:
    try:
        key = serialization.load_pem_private_key(pem, password=None)
    except Exception as exc:
        raise MalformedKey(str(exc)) from None
    if not isinstance(key, ec.EllipticCurvePrivateKey):
        raise MalformedKey("not an elliptic-curve private key")
    return key


def load_public_key(pem: bytes) -> ec.EllipticCurvePublicKey:
    try:
        key = serialization.load_pem_public_key(pem)
    except Exception as exc:
        raise MalformedKey(str(exc)) from None
    if not isinstance(key, ec.EllipticCurvePublicKey):
        raise MalformedKey("not an elliptic-curve public key")
    return key


def sign(plaintext: bytes, private_key: ec.EllipticCurvePrivateKey) -> bytes:
    return private_key.sign(plaintext, ec.ECDSA(hashes.SHA256()))


def verify(plaintext: bytes, signature: bytes, public_key: ec.EllipticCurvePublicKey) -> bool:
    try:
        public_key.verify(signature, plaintext, ec.ECDSA(hashes.SHA256()))
        return True
    except InvalidSignature:
        return False
    except Exception:
        return False


def _derive_key(shared: bytes, ephemeral_point: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=32, salt=ephemeral_point, info=_HKDF_INFO
    ).derive(shared)


def encrypt(plaintext: bytes, recipient_public: ec.EllipticCurvePublicKey) -> bytes:
    ephemeral = ec.generate_private_key(CURVE)
    point = ephemeral.public_key().public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
    )
    shared = ephemeral.exchange(ec.ECDH(), recipient_public)
    key = _derive_key(shared, point)
    nonce = os.urandom(_NONCE_LEN)
    ciphertext = AESGCM(key).encrypt(nonce, plaintext, point)
    return point + nonce + ciphertext


def decrypt(blob: bytes, recipient_private: ec.EllipticCurvePrivateKey) -> bytes:
    if len(blob) < _POINT_LEN + _NONCE_LEN + 16:
        raise DecryptionFailure("ciphertext too short")
    point = blob[:_POINT_LEN]
    nonce = blob[_POINT_LEN:_POINT_LEN + _NONCE_LEN]
    ciphertext = blob[_POINT_LEN + _NONCE_LEN:]
    try:
        ephemeral = ec.EllipticCurvePublicKey.from_encoded_point(CURVE, point)
        shared = recipient_private.exchange(ec.ECDH(), ephemeral)
        key = _derive_key(shared, point)
        return AESGCM(key).decrypt(nonce, ciphertext, point)
    except Exception as exc:
        raise DecryptionFailure(str(exc)) from None


@dataclass
class Envelope:
    """Signed-and-encrypted message between a client and a node."""

    payload: bytes      # encrypt(plaintext, recipient)
    signature: bytes    # sign(plaintext, sender)
    sender_id: str
    signer_key_ref: str

    def to_wire(self) -> dict:
        return {
            "payload": base64.b64encode(self.payload).decode(),
            "signature": base64.b64encode(self.signature).decode(),
            "senderId": self.sender_id,
            "signerKeyRef": self.signer_key_ref,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "Envelope":
        return cls(
            payload=base64.b64decode(doc["payload"]),
            signature=base64.b64decode(doc["signature"]),
            sender_id=doc["senderId"],
            signer_key_ref=doc["signerKeyRef"],
        )


def seal(plaintext: bytes, sender_id: str, sender_private: ec.EllipticCurvePrivateKey,
         recipient_public: ec.EllipticCurvePublicKey) -> Envelope:
    return Envelope(
        payload=encrypt(plaintext, recipient_public),
        signature=sign(plaintext, sender_private),
        sender_id=sender_id,
        signer_key_ref=sender_id,
    )


def open_envelope(envelope: Envelope, signer_public: ec.EllipticCurvePublicKey,
                  recipient_private: ec.EllipticCurvePrivateKey) -> bytes:
    plaintext = decrypt(envelope.payload, recipient_private)
    if not verify(plaintext, envelope.signature, signer_public):
        raise VerificationFailure(f"bad signature from {envelope.sender_id}")
    return plaintext
