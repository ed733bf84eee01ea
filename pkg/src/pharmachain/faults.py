"""Artifact-level fault injection for detector drills.

These rewrite a serialized ledger, never a live chain. TamperBlock edits a
block in place and leaves the links stale, the way an attacker without keys
would. ForgeSignature swaps in a bogus transaction signature and then
repairs body hashes, links, and header signatures, the way a complicit
miner would cover the splice; only the transaction signature check can
catch it.
"""

from __future__ import annotations

import hashlib
import json

from .canonical import canonical_json
from .crypto import KeyPair, derive_keypair
from .ledger import BlockHeader, TransactionRecord, body_digest
from .scenario import FaultKind, FaultSpec


class InapplicableFault(Exception):
    """The fault cannot be applied to this ledger (bad target, empty file)."""


def _parse_lines(ledger_bytes: bytes) -> list[dict]:
    lines = [line for line in ledger_bytes.split(b"\n") if line]
    if not lines:
        raise InapplicableFault("ledger is empty")
    docs = []
    for n, line in enumerate(lines):
        try:
            docs.append(json.loads(line))
        except ValueError as exc:
            raise InapplicableFault(f"ledger line {n} is not JSON: {exc}") from exc
    return docs


def _reassemble(docs: list[dict]) -> bytes:
    return b"".join(canonical_json(doc) + b"\n" for doc in docs)


def _tx_index(fault: FaultSpec) -> int:
    raw = fault.parameters.get("tx_index", "0")
    try:
        return int(raw)
    except ValueError as exc:
        raise InapplicableFault(f"tx_index {raw!r} is not an integer") from exc


def tamper_block(ledger_bytes: bytes, fault: FaultSpec) -> bytes:
    """Nudge one recorded value without repairing hashes or signatures."""
    docs = _parse_lines(ledger_bytes)
    if not 0 <= fault.target < len(docs):
        raise InapplicableFault(f"no block at height {fault.target}")
    doc = docs[fault.target]
    if doc.get("body"):
        idx = _tx_index(fault)
        if not 0 <= idx < len(doc["body"]):
            raise InapplicableFault(f"block {fault.target} has no transaction {idx}")
        doc["body"][idx]["timestamp"] = doc["body"][idx]["timestamp"] + 1
    else:
        doc["header"]["timestamp"] = doc["header"]["timestamp"] + 1
    return _reassemble(docs)


def forge_signature(ledger_bytes: bytes, fault: FaultSpec, *, miner: KeyPair | None = None) -> bytes:
    """Replace a transaction signature, then relink and re-sign the suffix.

    The miner key comes either from the caller or from a ``seed`` fault
    parameter; without it the cover-up cannot be staged.
    """
    docs = _parse_lines(ledger_bytes)
    if not 0 <= fault.target < len(docs):
        raise InapplicableFault(f"no block at height {fault.target}")
    body = docs[fault.target].get("body") or []
    idx = _tx_index(fault)
    if not 0 <= idx < len(body):
        raise InapplicableFault(f"block {fault.target} has no transaction {idx}")

    old = body[idx]["signature"]
    body[idx]["signature"] = hashlib.sha512(old.encode()).hexdigest()

    prev = None
    for height, doc in enumerate(docs):
        header = BlockHeader.from_dict(doc["header"])
        if height < fault.target:
            prev = header.digest()
            continue
        txs = [TransactionRecord.from_dict(t) for t in doc["body"]]
        fixed = BlockHeader(
            height=header.height,
            prev_hash=prev if prev is not None else header.prev_hash,
            body_hash=body_digest(txs) if txs else header.body_hash,
            miner=header.miner,
            timestamp=header.timestamp,
        )
        signer = miner
        if signer is None:
            seed = fault.parameters.get("seed")
            if seed is None:
                raise InapplicableFault("forging needs the miner key: pass a seed parameter")
            signer = derive_keypair(int(seed), fixed.miner)
        doc["header"] = fixed.to_dict()
        doc["miner_signature"] = signer.sign(fixed.digest().value).hex()
        prev = fixed.digest()
    return _reassemble(docs)


def apply_artifact_fault(ledger_bytes: bytes, fault: FaultSpec, *, miner: KeyPair | None = None) -> bytes:
    if fault.kind is FaultKind.TAMPER_BLOCK:
        return tamper_block(ledger_bytes, fault)
    if fault.kind is FaultKind.FORGE_SIGNATURE:
        return forge_signature(ledger_bytes, fault, miner=miner)
    raise InapplicableFault(f"{fault.kind.value} is not an artifact fault")
