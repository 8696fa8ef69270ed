"""Credential handling.

Raw API tokens exist only in the issuing response; the store keeps a sha256
digest. User secrets are salted PBKDF2 so a leaked state file does not leak
passwords.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import secrets

__all__ = [
    "digest_token",
    "hash_secret",
    "new_token",
    "verify_secret",
]

_PBKDF2_ITERATIONS = 60_000


def new_token() -> str:
    """A fresh opaque bearer token (43 urlsafe chars, 256 bits)."""
    return base64.urlsafe_b64encode(secrets.token_bytes(32)).decode("ascii").rstrip("=")


def digest_token(token: str) -> str:
    return hashlib.sha256(token.encode("ascii")).hexdigest()


def hash_secret(secret: str) -> str:
    salt = secrets.token_bytes(16)
    derived = hashlib.pbkdf2_hmac("sha256", secret.encode("utf-8"), salt, _PBKDF2_ITERATIONS)
    return f"pbkdf2${_PBKDF2_ITERATIONS}${salt.hex()}${derived.hex()}"


def verify_secret(secret: str, stored: str) -> bool:
    try:
        scheme, iterations, salt_hex, derived_hex = stored.split("$")
        if scheme != "pbkdf2":
            return False
        derived = hashlib.pbkdf2_hmac(
            "sha256", secret.encode("utf-8"), bytes.fromhex(salt_hex), int(iterations)
        )
        return hmac.compare_digest(derived.hex(), derived_hex)
    except (ValueError, TypeError):
        return False
