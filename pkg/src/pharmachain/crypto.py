"""Asymmetric keys, signatures, and hybrid payload encryption.

Each node owns one key pair derived deterministically from a 32-byte seed:
an Ed25519 signing key and an X25519 encryption key (two sub-seeds are
domain-separated off the master seed). Directed payloads use an ECIES-style
hybrid: ephemeral X25519 exchange, HKDF-SHA256, AES-256-GCM, so payload size
is unbounded and every encryption of the same plaintext differs.

Signatures are always computed over a payload *digest*, never the raw
payload, so on-chain verification works without fetching the payload.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .canonical import HashDigest, hash_payload
from .identity import NodeId

SEED_SIZE = 32
SIGNATURE_SIZE = 64
_RAW = serialization.Encoding.Raw
_RAW_FMT = serialization.PublicFormat.Raw

BROADCAST = "broadcast"

_NONCE_SIZE = 12
_EPHEMERAL_SIZE = 32


class DecryptFailure(Exception):
    """Wrong key, truncated, or corrupted ciphertext."""


@dataclass(frozen=True)
class PublicKey:
    """A node's public material: Ed25519 verify key + X25519 box key, 32 bytes each."""

    verify_bytes: bytes
    box_bytes: bytes

    def __post_init__(self) -> None:
        if len(self.verify_bytes) != 32 or len(self.box_bytes) != 32:
            raise ValueError("public key halves must be 32 bytes each")

    def encode(self) -> str:
        return base64.b64encode(self.verify_bytes + self.box_bytes).decode("ascii")

    @classmethod
    def decode(cls, text: str) -> "PublicKey":
        raw = base64.b64decode(text, validate=True)
        if len(raw) != 64:
            raise ValueError("encoded public key must decode to 64 bytes")
        return cls(verify_bytes=raw[:32], box_bytes=raw[32:])


@dataclass(frozen=True)
class KeyPair:
    """Seed-deterministic key material owned by one node."""

    owner: NodeId
    seed: bytes

    def __post_init__(self) -> None:
        if len(self.seed) != SEED_SIZE:
            raise ValueError("seed must be exactly 32 bytes")

    def _sign_key(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(hashlib.sha256(self.seed + b"/sign").digest())

    def _box_key(self) -> X25519PrivateKey:
        return X25519PrivateKey.from_private_bytes(hashlib.sha256(self.seed + b"/box").digest())

    @property
    def public(self) -> PublicKey:
        return PublicKey(
            verify_bytes=self._sign_key().public_key().public_bytes(_RAW, _RAW_FMT),
            box_bytes=self._box_key().public_key().public_bytes(_RAW, _RAW_FMT),
        )

    def sign(self, message: bytes) -> bytes:
        return self._sign_key().sign(message)

    def decrypt(self, ciphertext: bytes) -> bytes:
        return decrypt(self, ciphertext)


def generate_keypair(seed: bytes, owner: NodeId) -> KeyPair:
    """Same seed always yields the same key pair; distinct seeds distinct keys."""
    return KeyPair(owner=owner, seed=seed)


def derive_keypair(master_seed: int, owner: NodeId) -> KeyPair:
    """Per-node key pair off a scenario-level integer seed."""
    material = hashlib.sha256(f"{master_seed}/{owner}".encode("utf-8")).digest()
    return KeyPair(owner=owner, seed=material)


def sign(keypair: KeyPair, message: bytes) -> bytes:
    return keypair.sign(message)


def verify(public: PublicKey, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` was produced by the matching private key over ``message``."""
    try:
        Ed25519PublicKey.from_public_bytes(public.verify_bytes).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def _session_key(shared: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=b"pharmachain/box").derive(shared)


def encrypt(recipient_public: PublicKey, plaintext: bytes) -> bytes:
    """Hybrid encryption to the recipient; randomized, so repeat calls differ."""
    ephemeral = X25519PrivateKey.generate()
    shared = ephemeral.exchange(X25519PublicKey.from_public_bytes(recipient_public.box_bytes))
    ephemeral_pub = ephemeral.public_key().public_bytes(_RAW, _RAW_FMT)
    nonce = os.urandom(_NONCE_SIZE)
    # The header rides as associated data so bit flips there break the tag
    # too; the raw key exchange alone would forgive a flip of the ephemeral
    # key's top bit, which X25519 masks away on decode.
    sealed = AESGCM(_session_key(shared)).encrypt(nonce, plaintext, ephemeral_pub + nonce)
    return ephemeral_pub + nonce + sealed


def decrypt(recipient: KeyPair, ciphertext: bytes) -> bytes:
    """Inverse of :func:`encrypt`; raises :class:`DecryptFailure` on any mismatch."""
    if len(ciphertext) < _EPHEMERAL_SIZE + _NONCE_SIZE + 16:
        raise DecryptFailure("ciphertext too short")
    ephemeral_pub = ciphertext[:_EPHEMERAL_SIZE]
    nonce = ciphertext[_EPHEMERAL_SIZE : _EPHEMERAL_SIZE + _NONCE_SIZE]
    sealed = ciphertext[_EPHEMERAL_SIZE + _NONCE_SIZE :]
    try:
        shared = recipient._box_key().exchange(X25519PublicKey.from_public_bytes(ephemeral_pub))
        return AESGCM(_session_key(shared)).decrypt(nonce, sealed, ephemeral_pub + nonce)
    except (InvalidTag, ValueError) as exc:
        raise DecryptFailure("undecryptable ciphertext") from exc


@dataclass(frozen=True)
class SignedEnvelope:
    """A signed message between nodes.

    Directed envelopes carry ciphertext for the recipient; broadcasts carry
    the plaintext. ``payload_digest`` is always the digest of the plaintext
    and is what the signature covers.
    """

    sender: NodeId
    recipient: NodeId | None  # None means broadcast
    ciphertext: bytes
    payload_digest: HashDigest
    signature: bytes
    kind: str = "message"

    @property
    def is_broadcast(self) -> bool:
        return self.recipient is None

    def open_broadcast(self) -> bytes:
        if not self.is_broadcast:
            raise ValueError("directed envelope; decrypt with the recipient key")
        return self.ciphertext

    def open_directed(self, recipient: KeyPair) -> bytes:
        if self.is_broadcast:
            return self.ciphertext
        plaintext = decrypt(recipient, self.ciphertext)
        if hash_payload(plaintext) != self.payload_digest:
            raise DecryptFailure("decrypted payload does not match the signed digest")
        return plaintext


def seal_envelope(
    sender: KeyPair,
    payload: bytes,
    *,
    recipient: NodeId | None = None,
    recipient_public: PublicKey | None = None,
    kind: str = "message",
) -> SignedEnvelope:
    """Sign (and, for directed messages, encrypt) a payload for the overlay."""
    if (recipient is None) != (recipient_public is None):
        raise ValueError("directed envelopes need both recipient id and public key")
    digest = hash_payload(payload)
    body = payload if recipient_public is None else encrypt(recipient_public, payload)
    return SignedEnvelope(
        sender=sender.owner,
        recipient=recipient,
        ciphertext=body,
        payload_digest=digest,
        signature=sender.sign(digest.value),
        kind=kind,
    )


def envelope_is_authentic(envelope: SignedEnvelope, sender_public: PublicKey) -> bool:
    return verify(sender_public, envelope.payload_digest.value, envelope.signature)


class KeyDirectory:
    """Scenario-level map NodeId -> PublicKey, established at setup."""

    def __init__(self) -> None:
        self._entries: dict[NodeId, PublicKey] = {}

    def register(self, node: NodeId, public: PublicKey) -> None:
        self._entries[node] = public

    def get(self, node: NodeId) -> PublicKey | None:
        return self._entries.get(node)

    def __contains__(self, node: NodeId) -> bool:
        return node in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def as_mapping(self) -> dict[NodeId, PublicKey]:
        return dict(self._entries)

    def save(self, path: str | Path) -> None:
        doc = {str(n): pk.encode() for n, pk in sorted(self._entries.items(), key=lambda kv: str(kv[0]))}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "KeyDirectory":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        directory = cls()
        for name, encoded in doc.items():
            directory.register(NodeId.parse(name), PublicKey.decode(encoded))
        return directory
