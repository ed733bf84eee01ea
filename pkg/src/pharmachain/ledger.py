"""Append-only hash-linked chain of blocks carrying transaction digests.

Blocks store transaction records (digest + routing metadata), never payloads;
the payload bytes live in the content-addressed store. Every header carries
the digest of the previous header, and the miner signs each header digest,
so any mutation of a serialized ledger is attributable to the exact block it
landed in. One logical writer (the miner) appends; values are immutable.

Ledger file format: newline-delimited JSON, one block per line starting with
genesis, each line being the canonical serialization of the block, so
re-hashing the file reproduces every stored digest.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .canonical import ZERO_DIGEST, HashDigest, canonical_json, hash_obj, hash_payload
from .crypto import SIGNATURE_SIZE, KeyPair, PublicKey, verify
from .identity import NodeId, Role
from .registry import PayloadStore


class LedgerError(Exception):
    """Base class for append-path failures."""


class EmptyBody(LedgerError):
    pass


class ClockRegression(LedgerError):
    pass


class BadLink(LedgerError):
    pass


class BadHeight(LedgerError):
    pass


class BadBodyHash(LedgerError):
    pass


class TxKind(enum.Enum):
    """Custody and audit events a transaction can record."""

    PRODUCE = "Produce"
    MINE_VERDICT = "MineVerdict"
    SUPPLIER_FORWARD = "SupplierForward"
    SUPPLIER_RETURN = "SupplierReturn"
    DISTRIBUTE = "Distribute"
    DISPENSE = "Dispense"
    DELIVER = "Deliver"
    COMPLAINT = "Complaint"
    COMPLAINT_RESPONSE = "ComplaintResponse"
    RETURN_TO_PRODUCER = "ReturnToProducer"


@dataclass(frozen=True)
class TransactionRecord:
    """A signed custody/validation event referencing an off-chain payload."""

    tx_id: HashDigest
    kind: TxKind
    batch_id: str
    actor: NodeId
    timestamp: int
    signature: bytes  # actor's signature over tx_id

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id.hex(),
            "kind": self.kind.value,
            "batch_id": self.batch_id,
            "actor": str(self.actor),
            "timestamp": self.timestamp,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TransactionRecord":
        _require_keys(doc, {"tx_id", "kind", "batch_id", "actor", "timestamp", "signature"}, "transaction")
        timestamp = doc["timestamp"]
        if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp < 0:
            raise ValueError("transaction timestamp must be a non-negative integer")
        signature = _hex_bytes(doc["signature"], SIGNATURE_SIZE, "signature")
        return cls(
            tx_id=HashDigest.from_hex(doc["tx_id"]),
            kind=TxKind(doc["kind"]),
            batch_id=_require_str(doc["batch_id"], "batch_id"),
            actor=NodeId.parse(_require_str(doc["actor"], "actor")),
            timestamp=timestamp,
            signature=signature,
        )


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: HashDigest
    body_hash: HashDigest
    miner: NodeId
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "body_hash": self.body_hash.hex(),
            "miner": str(self.miner),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BlockHeader":
        _require_keys(doc, {"height", "prev_hash", "body_hash", "miner", "timestamp"}, "header")
        for name in ("height", "timestamp"):
            value = doc[name]
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"header {name} must be a non-negative integer")
        return cls(
            height=doc["height"],
            prev_hash=HashDigest.from_hex(doc["prev_hash"]),
            body_hash=HashDigest.from_hex(doc["body_hash"]),
            miner=NodeId.parse(_require_str(doc["miner"], "miner")),
            timestamp=doc["timestamp"],
        )

    def digest(self) -> HashDigest:
        return hash_obj(self.to_dict())


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    miner_signature: bytes  # miner's signature over the header digest
    body: tuple[TransactionRecord, ...]

    def to_dict(self) -> dict:
        return {
            "header": self.header.to_dict(),
            "miner_signature": self.miner_signature.hex(),
            "body": [tx.to_dict() for tx in self.body],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Block":
        _require_keys(doc, {"header", "miner_signature", "body"}, "block")
        body_doc = doc["body"]
        if not isinstance(body_doc, list):
            raise ValueError("block body must be a list")
        return cls(
            header=BlockHeader.from_dict(doc["header"]),
            miner_signature=_hex_bytes(doc["miner_signature"], SIGNATURE_SIZE, "miner_signature"),
            body=tuple(TransactionRecord.from_dict(tx) for tx in body_doc),
        )

    def serialize(self) -> bytes:
        return canonical_json(self.to_dict())


def body_digest(txs: tuple[TransactionRecord, ...] | list[TransactionRecord]) -> HashDigest:
    """Digest of the canonical serialization of the ordered transaction list."""
    return hash_obj([tx.to_dict() for tx in txs])


@dataclass(frozen=True)
class Chain:
    blocks: tuple[Block, ...]

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.blocks[-1].header.height

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    def transactions(self) -> Iterator[tuple[int, int, TransactionRecord]]:
        """Yield (block height, in-block index, transaction) in chain order."""
        for block in self.blocks:
            for index, tx in enumerate(block.body):
                yield block.header.height, index, tx


GENESIS_TIMESTAMP = 0


def make_genesis(miner: KeyPair, timestamp: int = GENESIS_TIMESTAMP) -> Block:
    """The only block allowed an empty body; prev_hash is 32 zero bytes."""
    header = BlockHeader(
        height=0,
        prev_hash=ZERO_DIGEST,
        body_hash=body_digest(()),
        miner=miner.owner,
        timestamp=timestamp,
    )
    return Block(header=header, miner_signature=miner.sign(header.digest().value), body=())


def new_chain(genesis: Block) -> Chain:
    if genesis.header.height != 0 or genesis.header.prev_hash != ZERO_DIGEST:
        raise LedgerError("genesis must have height 0 and an all-zero prev_hash")
    return Chain(blocks=(genesis,))


def build_block(
    prev: BlockHeader,
    txs: list[TransactionRecord] | tuple[TransactionRecord, ...],
    miner: KeyPair,
    timestamp: int,
) -> Block:
    """Assemble and sign the successor of ``prev`` carrying ``txs``."""
    if not txs:
        raise EmptyBody("a non-genesis block needs at least one transaction")
    if timestamp < prev.timestamp:
        raise ClockRegression(f"block timestamp {timestamp} precedes previous {prev.timestamp}")
    header = BlockHeader(
        height=prev.height + 1,
        prev_hash=prev.digest(),
        body_hash=body_digest(tuple(txs)),
        miner=miner.owner,
        timestamp=timestamp,
    )
    return Block(header=header, miner_signature=miner.sign(header.digest().value), body=tuple(txs))


def append_block(chain: Chain, block: Block) -> Chain:
    """Extend ``chain`` iff the block links correctly; the input chain is untouched."""
    tail = chain.head
    if block.header.prev_hash != tail.header.digest():
        raise BadLink(f"block {block.header.height} does not link to head {tail.header.height}")
    if block.header.height != tail.header.height + 1:
        raise BadHeight(f"expected height {tail.header.height + 1}, got {block.header.height}")
    if block.header.body_hash != body_digest(block.body):
        raise BadBodyHash(f"body hash mismatch at height {block.header.height}")
    if block.header.timestamp < tail.header.timestamp:
        raise ClockRegression(
            f"block timestamp {block.header.timestamp} precedes head {tail.header.timestamp}"
        )
    if not block.body:
        raise EmptyBody("a non-genesis block needs at least one transaction")
    return Chain(blocks=chain.blocks + (block,))


@dataclass(frozen=True)
class Finding:
    """One failed integrity check, attributed to a block when possible."""

    height: int | None
    category: str
    detail: str

    def __str__(self) -> str:
        where = "chain" if self.height is None else f"block {self.height}"
        return f"{where}: {self.category}: {self.detail}"


@dataclass
class IntegrityReport:
    valid: bool
    findings: list[Finding] = field(default_factory=list)
    blocks_checked: int = 0
    txs_checked: int = 0


def verify_chain(
    chain: Chain,
    keys: Mapping[NodeId, PublicKey],
    payloads: PayloadStore | None = None,
) -> IntegrityReport:
    """Full integrity sweep: links, body hashes, signatures, payload presence.

    Failures are reported, never raised; findings are ordered by height.
    """
    findings: list[Finding] = []
    txs_checked = 0

    for i, block in enumerate(chain.blocks):
        header = block.header

        # Attribute findings to the block's position, not its claimed height:
        # position is what survives tampering with the height field itself.
        def flag(category: str, detail: str, height: int = i) -> None:
            findings.append(Finding(height=height, category=category, detail=detail))

        if header.height != i:
            flag("height", f"expected height {i}, found {header.height}")
        if i == 0:
            if header.prev_hash != ZERO_DIGEST:
                flag("genesis", "genesis prev_hash must be 32 zero bytes")
        else:
            prev = chain.blocks[i - 1]
            if header.prev_hash != prev.header.digest():
                flag("link", f"prev_hash does not match the header digest of block {i - 1}")
            if header.timestamp < prev.header.timestamp:
                flag("clock", f"timestamp {header.timestamp} precedes block {i - 1}")
            if not block.body:
                flag("empty_body", "non-genesis block has an empty body")

        if header.body_hash != body_digest(block.body):
            flag("body_hash", "body hash does not match the serialized body")

        miner_key = keys.get(header.miner)
        if miner_key is None or header.miner.role is not Role.MINER:
            flag("unknown_miner", f"miner {header.miner} is not a registered miner node")
        elif not verify(miner_key, header.digest().value, block.miner_signature):
            flag("header_signature", f"miner signature of {header.miner} does not verify")

        for index, tx in enumerate(block.body):
            txs_checked += 1
            actor_key = keys.get(tx.actor)
            if actor_key is None:
                flag("unknown_actor", f"tx {index}: actor {tx.actor} has no registered key")
            elif not verify(actor_key, tx.tx_id.value, tx.signature):
                flag("tx_signature", f"tx {index}: signature of {tx.actor} does not verify")
            if payloads is not None:
                payload = payloads.get(tx.tx_id)
                if payload is None:
                    flag("payload_missing", f"tx {index}: payload {tx.tx_id.hex()[:16]} unresolvable")
                elif hash_payload(payload) != tx.tx_id:
                    flag("payload_mismatch", f"tx {index}: stored payload does not hash to tx_id")

    return IntegrityReport(
        valid=not findings,
        findings=findings,
        blocks_checked=len(chain.blocks),
        txs_checked=txs_checked,
    )


def serialize_chain(chain: Chain) -> bytes:
    return b"".join(block.serialize() + b"\n" for block in chain.blocks)


def deserialize_chain(data: bytes) -> Chain:
    """Strict loader: any malformed line raises ``ValueError``."""
    import json as _json

    blocks = []
    for line_no, raw in enumerate(_split_lines(data)):
        try:
            blocks.append(Block.from_dict(_json.loads(raw.decode("utf-8"))))
        except Exception as exc:
            raise ValueError(f"line {line_no}: {exc}") from exc
    if not blocks:
        raise ValueError("empty ledger")
    return Chain(blocks=tuple(blocks))


def verify_ledger_bytes(
    data: bytes,
    keys: Mapping[NodeId, PublicKey],
    payloads: PayloadStore | None = None,
) -> IntegrityReport:
    """Tolerant verification of a serialized ledger.

    Unparseable lines become findings attributed to their line index (which
    is the block height in a well-formed file); parseable ledgers get the
    full :func:`verify_chain` sweep.
    """
    import json as _json

    blocks: list[Block] = []
    findings: list[Finding] = []
    for line_no, raw in enumerate(_split_lines(data)):
        try:
            blocks.append(Block.from_dict(_json.loads(raw.decode("utf-8"))))
        except Exception as exc:
            findings.append(Finding(height=line_no, category="parse", detail=str(exc)))
    if not blocks and not findings:
        findings.append(Finding(height=None, category="parse", detail="empty ledger"))
    if findings:
        return IntegrityReport(valid=False, findings=findings, blocks_checked=len(blocks))
    return verify_chain(Chain(blocks=tuple(blocks)), keys, payloads)


def save_ledger(chain: Chain, path: str | Path) -> None:
    Path(path).write_bytes(serialize_chain(chain))


def load_ledger(path: str | Path) -> Chain:
    return deserialize_chain(Path(path).read_bytes())


def _split_lines(data: bytes) -> list[bytes]:
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    return lines


def new_transaction(
    actor: KeyPair,
    kind: TxKind,
    batch_id: str,
    payload: bytes,
    timestamp: int,
    payloads: PayloadStore,
) -> TransactionRecord:
    """Store a payload off-chain and return the signed on-chain record for it."""
    tx_id = payloads.put(payload)
    return TransactionRecord(
        tx_id=tx_id,
        kind=kind,
        batch_id=batch_id,
        actor=actor.owner,
        timestamp=timestamp,
        signature=actor.sign(tx_id.value),
    )


def _require_keys(doc: dict, expected: set[str], what: str) -> None:
    if not isinstance(doc, dict):
        raise ValueError(f"{what} must be an object")
    if set(doc) != expected:
        raise ValueError(f"{what} fields must be exactly {sorted(expected)}, got {sorted(doc)}")


def _require_str(value: object, what: str) -> str:
    if not isinstance(value, str):
        raise ValueError(f"{what} must be a string")
    return value


def _hex_bytes(text: object, size: int, what: str) -> bytes:
    value = _require_str(text, what)
    if len(value) != 2 * size or value.lower() != value:
        raise ValueError(f"{what} must be {2 * size} lowercase hex chars")
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise ValueError(f"{what} is not valid hex") from None
