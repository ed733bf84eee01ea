"""Batch history, current position, and authenticity from chain + payloads.

Everything here is reconstructed from on-chain records and their stored
payloads. Nothing consults the simulator, so these answers can be checked
against its independently kept event log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .canonical import HashDigest
from .crypto import PublicKey, verify
from .custody import CustodyState, IllegalTransition, apply_custody_event
from .identity import NodeId, Role
from .ledger import Chain, TransactionRecord, TxKind, verify_chain
from .registry import PayloadStore


class UnknownBatch(Exception):
    pass


@dataclass(frozen=True)
class TraceEvent:
    timestamp: int
    actor: NodeId
    kind: TxKind
    block_height: int
    tx_id: HashDigest
    detail: str

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "actor": str(self.actor),
            "kind": self.kind.value,
            "block_height": self.block_height,
            "tx_id": self.tx_id.hex(),
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TraceEvent":
        return cls(
            timestamp=doc["timestamp"],
            actor=NodeId.parse(doc["actor"]),
            kind=TxKind(doc["kind"]),
            block_height=doc["block_height"],
            tx_id=HashDigest.from_hex(doc["tx_id"]),
            detail=doc["detail"],
        )


@dataclass(frozen=True)
class Position:
    role: Role
    node: NodeId

    def to_dict(self) -> dict:
        return {"role": self.role.value, "node": str(self.node)}

    @classmethod
    def from_dict(cls, doc: dict) -> "Position":
        return cls(role=Role(doc["role"]), node=NodeId.parse(doc["node"]))


@dataclass(frozen=True)
class TraceReport:
    batch_id: str
    found: bool
    events: tuple[TraceEvent, ...]
    final_state: CustodyState | None
    position: Position | None

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "found": self.found,
            "events": [e.to_dict() for e in self.events],
            "final_state": self.final_state.value if self.final_state else None,
            "position": self.position.to_dict() if self.position else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TraceReport":
        return cls(
            batch_id=doc["batch_id"],
            found=doc["found"],
            events=tuple(TraceEvent.from_dict(e) for e in doc["events"]),
            final_state=CustodyState(doc["final_state"]) if doc["final_state"] else None,
            position=Position.from_dict(doc["position"]) if doc["position"] else None,
        )


@dataclass(frozen=True)
class AuthVerdict:
    authentic: bool
    findings: tuple[str, ...]


def _payload_doc(tx: TransactionRecord, payloads: PayloadStore) -> dict | None:
    raw = payloads.get(tx.tx_id)
    if raw is None:
        return None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        return None
    return doc if isinstance(doc, dict) else None


def _event_detail(tx: TransactionRecord, doc: dict | None) -> str:
    if doc is None:
        return "payload unavailable"
    kind = tx.kind
    if kind is TxKind.PRODUCE:
        return f"produced {doc.get('quantity', '?')} units of {doc.get('medicine_name', '?')}"
    if kind is TxKind.MINE_VERDICT:
        temp = next(
            (s for s in doc.get("stages", []) if s.get("stage") == "Temperature"), None
        )
        note = "temperature check passed" if temp and temp.get("passed") else "temperature unchecked"
        return f"accepted by miner ({note})"
    if kind is TxKind.RETURN_TO_PRODUCER:
        return f"rejected: {doc.get('label', 'unknown reason')}"
    if kind is TxKind.SUPPLIER_FORWARD:
        target = doc.get("forwarded_to")
        return f"cleared by supplier, forwarded to {target}" if target else "cleared by supplier"
    if kind is TxKind.SUPPLIER_RETURN:
        return f"returned by supplier: {doc.get('reason', 'shelf life too short')}"
    if kind is TxKind.DISTRIBUTE:
        n = len(doc.get("allocations", []))
        return f"allocated to {n} pharmacist order{'s' if n != 1 else ''}"
    if kind is TxKind.DISPENSE:
        return f"dispensed {doc.get('quantity', '?')} units for {doc.get('customer', '?')}"
    if kind is TxKind.DELIVER:
        return f"delivered to {doc.get('customer', '?')}"
    if kind is TxKind.COMPLAINT:
        return f"complaint {doc.get('complaint_id', '?')} filed"
    if kind is TxKind.COMPLAINT_RESPONSE:
        return f"producer responded to {doc.get('complaint_id', '?')}"
    return kind.value


_CUSTODY_KINDS = {
    TxKind.PRODUCE,
    TxKind.MINE_VERDICT,
    TxKind.RETURN_TO_PRODUCER,
    TxKind.SUPPLIER_FORWARD,
    TxKind.SUPPLIER_RETURN,
    TxKind.DISTRIBUTE,
    TxKind.DISPENSE,
    TxKind.DELIVER,
}


def _position_after(
    located: list[tuple[TransactionRecord, dict | None, int]], chain: Chain
) -> Position | None:
    """Custodian implied by the latest custody-moving transaction."""
    producer: NodeId | None = None
    for tx, _, _ in located:
        if tx.kind is TxKind.PRODUCE:
            producer = tx.actor
            break

    for tx, doc, height in reversed(located):
        kind = tx.kind
        if kind not in _CUSTODY_KINDS:
            continue
        holder = tx.actor
        if kind is TxKind.PRODUCE:
            holder = chain.blocks[height].header.miner
        elif kind in (TxKind.MINE_VERDICT, TxKind.SUPPLIER_FORWARD):
            target = (doc or {}).get("forwarded_to")
            if target:
                holder = NodeId.parse(target)
        elif kind in (TxKind.RETURN_TO_PRODUCER, TxKind.SUPPLIER_RETURN):
            if producer is not None:
                holder = producer
        elif kind is TxKind.DISTRIBUTE:
            allocations = (doc or {}).get("allocations", [])
            if allocations:
                holder = NodeId.parse(allocations[-1]["pharmacist"])
        elif kind is TxKind.DELIVER:
            target = (doc or {}).get("customer")
            if target:
                holder = NodeId.parse(target)
        return Position(role=holder.role, node=holder)
    return None


def _fold_custody(located: list[tuple[TransactionRecord, dict | None, int]]) -> CustodyState | None:
    state: CustodyState | None = None
    for tx, _, _ in located:
        if tx.kind is TxKind.PRODUCE:
            state = state or CustodyState.PRODUCED
        elif state is not None:
            try:
                state = apply_custody_event(state, tx.kind)
            except IllegalTransition:
                pass
    return state


def _locate(batch_id: str, chain: Chain, payloads: PayloadStore):
    located = []
    for height, index, tx in chain.transactions():
        if tx.batch_id == batch_id:
            located.append((tx, _payload_doc(tx, payloads), height))
    return located


def trace_history(batch_id: str, chain: Chain, payloads: PayloadStore) -> TraceReport:
    """Every transaction touching the batch, in chain order, plus the fold."""
    located = _locate(batch_id, chain, payloads)
    if not located:
        return TraceReport(batch_id=batch_id, found=False, events=(), final_state=None, position=None)
    events = tuple(
        TraceEvent(
            timestamp=tx.timestamp,
            actor=tx.actor,
            kind=tx.kind,
            block_height=height,
            tx_id=tx.tx_id,
            detail=_event_detail(tx, doc),
        )
        for tx, doc, height in located
    )
    return TraceReport(
        batch_id=batch_id,
        found=True,
        events=events,
        final_state=_fold_custody(located),
        position=_position_after(located, chain),
    )


def current_position(batch_id: str, chain: Chain, payloads: PayloadStore) -> Position:
    report = trace_history(batch_id, chain, payloads)
    if not report.found or report.position is None:
        raise UnknownBatch(f"no transactions reference batch {batch_id!r}")
    return report.position


_STRUCTURAL_CATEGORIES = {
    "height",
    "genesis",
    "link",
    "clock",
    "empty_body",
    "body_hash",
    "unknown_miner",
    "header_signature",
}


def verify_authenticity(
    batch_id: str,
    chain: Chain,
    payloads: PayloadStore,
    keys: dict[NodeId, PublicKey],
) -> AuthVerdict:
    """Authenticity checks for one batch; every failure adds one finding.

    Checks: a producer-signed origin record exists, every event signature
    verifies, the custody fold stays legal, every payload resolves, and the
    chain's own structure (links, hashes, header signatures) holds up.
    """
    findings: list[str] = []
    located = _locate(batch_id, chain, payloads)

    produce_txs = [tx for tx, _, _ in located if tx.kind is TxKind.PRODUCE]
    if not produce_txs:
        findings.append(f"unknown batch origin: no Produce transaction for {batch_id}")
    else:
        for tx in produce_txs:
            if tx.actor.role is not Role.PRODUCER:
                findings.append(
                    f"unknown batch origin: Produce transaction signed by {tx.actor}, not a producer"
                )

    for tx, _, height in located:
        key = keys.get(tx.actor)
        if key is None:
            findings.append(f"signature failure: no registered key for {tx.actor} (block {height})")
        elif not verify(key, tx.tx_id.value, tx.signature):
            findings.append(
                f"signature failure: transaction by {tx.actor} in block {height} does not verify"
            )

    state: CustodyState | None = None
    for tx, _, _ in located:
        if tx.kind is TxKind.PRODUCE:
            state = state or CustodyState.PRODUCED
            continue
        if tx.kind not in _CUSTODY_KINDS:
            continue
        if state is None:
            continue  # origin problem already reported above
        try:
            state = apply_custody_event(state, tx.kind)
        except IllegalTransition as exc:
            findings.append(f"illegal transition: {exc}")

    for tx, _, height in located:
        if payloads.get(tx.tx_id) is None:
            findings.append(f"missing payload: transaction {tx.tx_id.hex()[:16]} (block {height})")

    structure = verify_chain(chain, keys, payloads=None)
    for finding in structure.findings:
        if finding.category in _STRUCTURAL_CATEGORIES:
            findings.append(f"chain-link failure: {finding}")

    return AuthVerdict(authentic=not findings, findings=tuple(findings))


def render_report(report: TraceReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    lines = [f"batch {report.batch_id}"]
    if not report.found:
        lines.append("  no transactions reference this batch")
        return "\n".join(lines)
    for event in report.events:
        lines.append(
            f"  t={event.timestamp} block={event.block_height} "
            f"{event.actor} {event.kind.value}: {event.detail}"
        )
    state = report.final_state.value if report.final_state else "unknown"
    lines.append(f"  state: {state}")
    if report.position:
        lines.append(f"  position: {report.position.node} ({report.position.role.value})")
    return "\n".join(lines)
