"""Privacy mediator, message envelope crypto, keystore, and client auth."""

from .auth import AuthFailure, authenticate_client, issue_nonce, make_hello
from .crypto import (
    CryptoError,
    DecryptionFailure,
    Envelope,
    MalformedKey,
    VerificationFailure,
    decrypt,
    encrypt,
    generate_keypair,
    open_envelope,
    seal,
    sign,
    verify,
)
from .keystore import Keystore, UnknownPrincipal
from .policy import (
    BLOCKED,
    Blocked,
    NotOwner,
    PolicyError,
    PolicyRule,
    PrivacyMediator,
    Release,
    SummarizerMissing,
    UnknownSensor,
    WindowAverageSummarizer,
    ZipcodeSummarizer,
    blur_text,
    builtin_zipcode_table,
)

__all__ = [
    "AuthFailure", "authenticate_client", "issue_nonce", "make_hello",
    "CryptoError", "DecryptionFailure", "Envelope", "MalformedKey",
    "VerificationFailure", "decrypt", "encrypt", "generate_keypair",
    "open_envelope", "seal", "sign", "verify",
    "Keystore", "UnknownPrincipal",
    "BLOCKED", "Blocked", "NotOwner", "PolicyError", "PolicyRule",
    "PrivacyMediator", "Release", "SummarizerMissing", "UnknownSensor",
    "WindowAverageSummarizer", "ZipcodeSummarizer", "blur_text",
    "builtin_zipcode_table",
]
