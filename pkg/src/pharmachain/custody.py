"""Custody state machine and the six-role supply flow.

Batches move producer -> miner -> supplier -> distributor -> pharmacist ->
customer, with return paths back to the producer. Each handoff is a signed
transaction; folding those transactions through the state machine
reconstructs where a batch is and how it got there.

Operations here build and sign transactions but never append blocks; the
miner is the only writer, so callers collect the returned transactions and
hand them to the miner for inclusion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

from .canonical import canonical_json
from .crypto import KeyPair
from .identity import NodeId
from .ledger import TransactionRecord, TxKind, new_transaction
from .mining import DemandLedger, MedicineBatch, QAReport, TemperatureLog
from .registry import MedicineListStore, PayloadStore

SECONDS_PER_DAY = 86400


class FlowError(Exception):
    """Base class for supply-flow rule violations."""


class WrongState(FlowError):
    pass


class UnknownAllocation(FlowError):
    pass


class NotRecipient(FlowError):
    pass


class AlreadyResponded(FlowError):
    pass


class UnknownComplaint(FlowError):
    pass


class UnknownMedicine(FlowError):
    pass


class IllegalTransition(FlowError):
    def __init__(self, state: "CustodyState", event: TxKind) -> None:
        super().__init__(f"no edge from {state.value} on {event.value}")
        self.state = state
        self.event = event


class CustodyState(enum.Enum):
    PRODUCED = "Produced"
    VALIDATED = "Validated"
    SUPPLIER_CLEARED = "SupplierCleared"
    DISTRIBUTED = "Distributed"
    DISPENSED = "Dispensed"
    DELIVERED = "Delivered"
    RETURNED_TO_PRODUCER = "ReturnedToProducer"


_EDGES: dict[tuple[CustodyState, TxKind], CustodyState] = {
    (CustodyState.PRODUCED, TxKind.MINE_VERDICT): CustodyState.VALIDATED,
    (CustodyState.PRODUCED, TxKind.RETURN_TO_PRODUCER): CustodyState.RETURNED_TO_PRODUCER,
    (CustodyState.PRODUCED, TxKind.SUPPLIER_RETURN): CustodyState.RETURNED_TO_PRODUCER,
    (CustodyState.VALIDATED, TxKind.RETURN_TO_PRODUCER): CustodyState.RETURNED_TO_PRODUCER,
    (CustodyState.VALIDATED, TxKind.SUPPLIER_RETURN): CustodyState.RETURNED_TO_PRODUCER,
    (CustodyState.VALIDATED, TxKind.SUPPLIER_FORWARD): CustodyState.SUPPLIER_CLEARED,
    (CustodyState.SUPPLIER_CLEARED, TxKind.DISTRIBUTE): CustodyState.DISTRIBUTED,
    (CustodyState.DISTRIBUTED, TxKind.DISPENSE): CustodyState.DISPENSED,
    (CustodyState.DISPENSED, TxKind.DELIVER): CustodyState.DELIVERED,
}


def advance_custody(state: CustodyState, event: TxKind) -> CustodyState:
    """Step along one declared edge; every other pair is illegal."""
    target = _EDGES.get((state, event))
    if target is None:
        raise IllegalTransition(state, event)
    return target


def apply_custody_event(state: CustodyState, event: TxKind) -> CustodyState:
    """Fold rule for replaying a chain: the state machine plus bookkeeping.

    Complaints don't move custody. A batch split across several allocations
    is dispensed more than once, so a Dispense arriving at Delivered reopens
    the dispensing leg instead of failing.
    """
    if event in (TxKind.PRODUCE, TxKind.COMPLAINT, TxKind.COMPLAINT_RESPONSE):
        return state
    if state is CustodyState.DELIVERED and event is TxKind.DISPENSE:
        return CustodyState.DISPENSED
    return advance_custody(state, event)


@dataclass(frozen=True)
class Order:
    order_id: str
    pharmacist: NodeId
    medicine_name: str
    quantity: int
    timestamp: int
    customer: NodeId | None = None  # who the pharmacist hands the units to

    def __post_init__(self) -> None:
        if self.quantity <= 0:
            raise ValueError("order quantity must be positive")


@dataclass(frozen=True)
class Allocation:
    batch_id: str
    pharmacist: NodeId
    quantity: int
    order_id: str

    def __post_init__(self) -> None:
        if self.quantity <= 0:
            raise ValueError("allocation quantity must be positive")

    @property
    def allocation_id(self) -> str:
        return f"{self.batch_id}/{self.order_id}"

    def to_dict(self) -> dict:
        return {
            "order_id": self.order_id,
            "pharmacist": str(self.pharmacist),
            "quantity": self.quantity,
        }


@dataclass(frozen=True)
class Shortfall:
    order_id: str
    medicine_name: str
    missing: int


class ComplaintStatus(enum.Enum):
    OPEN = "Open"
    RESPONDED = "Responded"


@dataclass(frozen=True)
class Complaint:
    complaint_id: str
    customer: NodeId
    batch_id: str
    description: str
    status: ComplaintStatus = ComplaintStatus.OPEN
    response: str = ""

    def __post_init__(self) -> None:
        if (self.status is ComplaintStatus.RESPONDED) != bool(self.response):
            raise ValueError("a complaint is Responded exactly when a response exists")


def collect_demand(orders: Iterable[Order]) -> DemandLedger:
    """Sum order quantities per medicine; every order also joins the history."""
    demand = DemandLedger()
    for order in orders:
        name = order.medicine_name
        demand.current_demand[name] = demand.current_demand.get(name, 0) + order.quantity
        demand.past_orders.setdefault(name, []).append(order.quantity)
    return demand


def produce(
    demand: DemandLedger,
    formulary: MedicineListStore,
    now: int,
    producer: KeyPair,
    payloads: PayloadStore,
    *,
    order_of_appearance: list[str] | None = None,
    telemetry: Mapping[int, TemperatureLog] | None = None,
    qa_reports: Mapping[int, QAReport] | None = None,
    expiry_overrides: Mapping[int, int] | None = None,
) -> tuple[list[MedicineBatch], list[TransactionRecord]]:
    """One batch per demanded medicine, quantity equal to current demand.

    Batches are numbered in ``order_of_appearance`` (falling back to demand
    insertion order); the per-index maps let a scenario attach sensor logs,
    QA reports, or a doctored expiry to specific batches. Expiry defaults to
    now + shelf life, and manufacture is always one shelf life before expiry
    so overrides cannot produce an inverted date pair.
    """
    names = order_of_appearance if order_of_appearance is not None else list(demand.current_demand)
    telemetry = telemetry or {}
    qa_reports = qa_reports or {}
    expiry_overrides = expiry_overrides or {}

    batches: list[MedicineBatch] = []
    txs: list[TransactionRecord] = []
    for index, name in enumerate(names):
        spec = formulary.get(name)
        if spec is None:
            raise UnknownMedicine(f"no registered medicine named {name!r}")
        shelf_seconds = spec.shelf_life_days * SECONDS_PER_DAY
        expiry = expiry_overrides.get(index, now + shelf_seconds)
        batch = MedicineBatch(
            batch_id=f"B-{index:03d}",
            medicine_name=name,
            ingredients=dict(spec.ingredients),
            quantity=demand.demand_for(name),
            manufacture_date=expiry - shelf_seconds,
            expiry_date=expiry,
            temperature_log=telemetry.get(index, TemperatureLog()),
            qa_report=qa_reports.get(index, QAReport(present=True, passed=True)),
        )
        batches.append(batch)
        txs.append(
            new_transaction(
                producer, TxKind.PRODUCE, batch.batch_id, canonical_json(batch.to_dict()), now, payloads
            )
        )
    return batches, txs


class SupplierDecision(enum.Enum):
    FORWARD = "Forward"
    RETURN = "Return"


def supplier_check(
    batch: MedicineBatch,
    now: int,
    policy_days: int,
    *,
    custody: CustodyState,
    supplier: KeyPair,
    payloads: PayloadStore,
    forward_to: NodeId | None = None,
) -> tuple[SupplierDecision, TransactionRecord]:
    """Recheck remaining shelf life; forward if at least ``policy_days`` remain."""
    if custody is not CustodyState.VALIDATED:
        raise WrongState(f"batch {batch.batch_id} is {custody.value}, not Validated")
    remaining = batch.expiry_date - now
    if remaining >= policy_days * SECONDS_PER_DAY:
        doc = {"batch_id": batch.batch_id, "remaining_seconds": remaining, "timestamp": now}
        if forward_to is not None:
            doc["forwarded_to"] = str(forward_to)
        tx = new_transaction(
            supplier, TxKind.SUPPLIER_FORWARD, batch.batch_id, canonical_json(doc), now, payloads
        )
        return SupplierDecision.FORWARD, tx
    doc = {
        "batch_id": batch.batch_id,
        "remaining_seconds": remaining,
        "policy_days": policy_days,
        "reason": "remaining shelf life below supplier policy",
        "timestamp": now,
    }
    tx = new_transaction(
        supplier, TxKind.SUPPLIER_RETURN, batch.batch_id, canonical_json(doc), now, payloads
    )
    return SupplierDecision.RETURN, tx


def distribute(
    inventory: list[MedicineBatch],
    orders: list[Order],
    *,
    custody: Mapping[str, CustodyState],
    distributor: KeyPair,
    payloads: PayloadStore,
    now: int,
) -> tuple[list[Allocation], list[Shortfall], list[TransactionRecord]]:
    """Fill orders in arrival order, draining earliest-expiry batches first.

    Emits one Distribute transaction per batch that gave up any units; its
    payload lists every allocation so the handoff to each pharmacist is on
    the record.
    """
    for batch in inventory:
        state = custody.get(batch.batch_id)
        if state is not CustodyState.SUPPLIER_CLEARED:
            raise WrongState(
                f"batch {batch.batch_id} is {state.value if state else 'untracked'}, not SupplierCleared"
            )

    by_medicine: dict[str, list[MedicineBatch]] = {}
    for batch in inventory:
        by_medicine.setdefault(batch.medicine_name, []).append(batch)
    for stock in by_medicine.values():
        stock.sort(key=lambda b: (b.expiry_date, b.batch_id))

    remaining = {batch.batch_id: batch.quantity for batch in inventory}
    allocations: list[Allocation] = []
    shortfalls: list[Shortfall] = []
    for order in orders:
        need = order.quantity
        for batch in by_medicine.get(order.medicine_name, []):
            if need == 0:
                break
            available = remaining[batch.batch_id]
            if available == 0:
                continue
            take = min(available, need)
            remaining[batch.batch_id] -= take
            need -= take
            allocations.append(
                Allocation(
                    batch_id=batch.batch_id,
                    pharmacist=order.pharmacist,
                    quantity=take,
                    order_id=order.order_id,
                )
            )
        if need:
            shortfalls.append(
                Shortfall(order_id=order.order_id, medicine_name=order.medicine_name, missing=need)
            )

    txs: list[TransactionRecord] = []
    for batch in inventory:
        batch_allocations = [a for a in allocations if a.batch_id == batch.batch_id]
        if not batch_allocations:
            continue
        doc = {
            "batch_id": batch.batch_id,
            "allocations": [a.to_dict() for a in batch_allocations],
            "timestamp": now,
        }
        txs.append(
            new_transaction(
                distributor, TxKind.DISTRIBUTE, batch.batch_id, canonical_json(doc), now, payloads
            )
        )
    return allocations, shortfalls, txs


def dispense(
    book: dict[str, Allocation],
    allocation_id: str,
    customer: NodeId,
    now: int,
    *,
    pharmacist: KeyPair,
    custody: Mapping[str, CustodyState],
    payloads: PayloadStore,
) -> tuple[TransactionRecord, TransactionRecord]:
    """Hand an allocation to a customer: a Dispense then a Deliver record.

    The allocation is consumed, so dispensing the same one twice fails. A
    batch split across allocations is legal to dispense again after an
    earlier split was delivered.
    """
    allocation = book.get(allocation_id)
    if allocation is None:
        raise UnknownAllocation(f"no open allocation {allocation_id!r}")
    state = custody.get(allocation.batch_id)
    if state not in (CustodyState.DISTRIBUTED, CustodyState.DISPENSED, CustodyState.DELIVERED):
        raise WrongState(
            f"batch {allocation.batch_id} is {state.value if state else 'untracked'}, not Distributed"
        )
    del book[allocation_id]
    doc = {
        "batch_id": allocation.batch_id,
        "order_id": allocation.order_id,
        "quantity": allocation.quantity,
        "customer": str(customer),
        "timestamp": now,
    }
    dispense_tx = new_transaction(
        pharmacist, TxKind.DISPENSE, allocation.batch_id, canonical_json(doc), now, payloads
    )
    deliver_tx = new_transaction(
        pharmacist,
        TxKind.DELIVER,
        allocation.batch_id,
        canonical_json({**doc, "handed_over": True}),
        now,
        payloads,
    )
    return dispense_tx, deliver_tx


def submit_complaint(
    customer: KeyPair,
    batch_id: str,
    description: str,
    complaint_id: str,
    recipients: Mapping[str, set[NodeId]],
    now: int,
    payloads: PayloadStore,
) -> tuple[Complaint, TransactionRecord]:
    """Open a complaint about a delivered batch; only actual recipients may."""
    if customer.owner not in recipients.get(batch_id, set()):
        raise NotRecipient(f"{customer.owner} never received batch {batch_id}")
    complaint = Complaint(
        complaint_id=complaint_id,
        customer=customer.owner,
        batch_id=batch_id,
        description=description,
    )
    doc = {
        "complaint_id": complaint_id,
        "batch_id": batch_id,
        "customer": str(customer.owner),
        "description": description,
        "timestamp": now,
    }
    tx = new_transaction(
        customer, TxKind.COMPLAINT, batch_id, canonical_json(doc), now, payloads
    )
    return complaint, tx


def respond_complaint(
    producer: KeyPair,
    complaint_id: str,
    response: str,
    complaints: dict[str, Complaint],
    now: int,
    payloads: PayloadStore,
) -> tuple[Complaint, TransactionRecord]:
    """Close an open complaint with the producer's free-text response."""
    complaint = complaints.get(complaint_id)
    if complaint is None:
        raise UnknownComplaint(f"no complaint {complaint_id!r}")
    if complaint.status is ComplaintStatus.RESPONDED:
        raise AlreadyResponded(f"complaint {complaint_id} already has a response")
    updated = replace(complaint, status=ComplaintStatus.RESPONDED, response=response)
    complaints[complaint_id] = updated
    doc = {
        "complaint_id": complaint_id,
        "batch_id": complaint.batch_id,
        "response": response,
        "timestamp": now,
    }
    tx = new_transaction(
        producer, TxKind.COMPLAINT_RESPONSE, complaint.batch_id, canonical_json(doc), now, payloads
    )
    return updated, tx
