"""Password hashing and verification.

Passwords are stored as PBKDF2-HMAC-SHA256 strings:

    pbkdf2-sha256$60000$<salt hex>$<digest hex>

Verification runs in constant time via hmac.compare_digest, and an unknown
username still burns one PBKDF2 computation against a dummy record so the
timing of a failed login does not reveal whether the name exists.
"""

from __future__ import annotations

import hashlib
import hmac
import os

SCHEME = "pbkdf2-sha256"
ITERATIONS = 60_000
SALT_BYTES = 16

_DUMMY_SALT = b"\x00" * SALT_BYTES


def derive_salt(seed: int, username: str) -> bytes:
    """Deterministic per-user salt for reproducible seeded scenarios."""
    return hashlib.sha256(b"%d:%s" % (seed, username.encode())).digest()[:SALT_BYTES]


def hash_password(password: str, salt: bytes | None = None) -> str:
    salt = os.urandom(SALT_BYTES) if salt is None else salt
    digest = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, ITERATIONS)
    return "%s$%d$%s$%s" % (SCHEME, ITERATIONS, salt.hex(), digest.hex())


def verify_password(password: str, stored: str | None) -> bool:
    """Check a candidate password; None (unknown user) always fails slowly."""
    if stored is None:
        hashlib.pbkdf2_hmac("sha256", password.encode(), _DUMMY_SALT, ITERATIONS)
        return False
    try:
        scheme, iterations, salt_hex, digest_hex = stored.split("$")
        iterations = int(iterations)
        salt = bytes.fromhex(salt_hex)
        want = bytes.fromhex(digest_hex)
    except ValueError:
        return False
    if scheme != SCHEME:
        return False
    got = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, iterations)
    return hmac.compare_digest(got, want)
