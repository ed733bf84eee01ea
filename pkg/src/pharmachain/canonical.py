"""Canonical JSON serialization and SHA-256 digests.

Everything that ends up under a hash goes through :func:`canonical_json`:
UTF-8, lexicographically sorted keys, no insignificant whitespace, and no
floats (integers only), so independent re-serialization reproduces digests
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass

_HEX_DIGITS = set(string.hexdigits.lower()) - set("ABCDEF")

DIGEST_SIZE = 32


@dataclass(frozen=True)
class HashDigest:
    """A 32-byte SHA-256 digest; hex form is lowercase, 64 characters."""

    value: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.value, bytes) or len(self.value) != DIGEST_SIZE:
            raise ValueError("digest must be exactly 32 bytes")

    def hex(self) -> str:
        return self.value.hex()

    def __str__(self) -> str:
        return self.hex()

    @classmethod
    def from_hex(cls, text: str) -> "HashDigest":
        if len(text) != 2 * DIGEST_SIZE or not set(text) <= _HEX_DIGITS:
            raise ValueError(f"digest hex must be 64 lowercase hex chars, got {text!r}")
        return cls(bytes.fromhex(text))


ZERO_DIGEST = HashDigest(bytes(DIGEST_SIZE))


def _reject_floats(obj: object) -> None:
    if isinstance(obj, float):
        raise TypeError("floats are not allowed in hashed content; use scaled integers")
    if isinstance(obj, dict):
        for k, v in obj.items():
            if not isinstance(k, str):
                raise TypeError(f"canonical JSON keys must be strings, got {type(k).__name__}")
            _reject_floats(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _reject_floats(v)


def canonical_json(obj: object) -> bytes:
    """Serialize to the canonical hashed form. Rejects floats outright."""
    _reject_floats(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def hash_payload(payload: bytes) -> HashDigest:
    """SHA-256 of a raw payload; the content address used everywhere."""
    return HashDigest(hashlib.sha256(payload).digest())


def hash_obj(obj: object) -> HashDigest:
    """Digest of the canonical JSON form of ``obj``."""
    return hash_payload(canonical_json(obj))
