import json
import random

import pytest

from pharmachain.custody import (
    Allocation,
    AlreadyResponded,
    Complaint,
    ComplaintStatus,
    CustodyState,
    IllegalTransition,
    NotRecipient,
    Order,
    SupplierDecision,
    UnknownAllocation,
    UnknownComplaint,
    UnknownMedicine,
    WrongState,
    advance_custody,
    apply_custody_event,
    collect_demand,
    dispense,
    distribute,
    produce,
    respond_complaint,
    submit_complaint,
    supplier_check,
)
from pharmachain.identity import Role, node
from pharmachain.ledger import TxKind
from pharmachain.mining import MedicineBatch, QAReport, TemperatureLog, TemperatureReading
from pharmachain.registry import PayloadStore

from conftest import keypair_for

NOW = 1_000_000
DAY = 86400


@pytest.fixture
def supplier_key():
    return keypair_for("supplier", Role.SUPPLIER)


@pytest.fixture
def distributor_key():
    return keypair_for("distributor", Role.DISTRIBUTOR)


@pytest.fixture
def pharmacist_key():
    return keypair_for("pharmacist", Role.PHARMACIST)


@pytest.fixture
def customer_key():
    return keypair_for("customer", Role.CUSTOMER)


def make_batch(batch_id="B-000", name="Amoxicillin", quantity=100, expiry=NOW + 40 * DAY):
    return MedicineBatch(
        batch_id=batch_id,
        medicine_name=name,
        ingredients={"amoxicillin_trihydrate": 500},
        quantity=quantity,
        manufacture_date=expiry - 730 * DAY,
        expiry_date=expiry,
    )


# The transition table, restated here from scratch so the implementation is
# checked against an independent copy of the rules, pair by pair.

DECLARED_EDGES = {
    ("Produced", "MineVerdict"): "Validated",
    ("Produced", "ReturnToProducer"): "ReturnedToProducer",
    ("Produced", "SupplierReturn"): "ReturnedToProducer",
    ("Validated", "ReturnToProducer"): "ReturnedToProducer",
    ("Validated", "SupplierReturn"): "ReturnedToProducer",
    ("Validated", "SupplierForward"): "SupplierCleared",
    ("SupplierCleared", "Distribute"): "Distributed",
    ("Distributed", "Dispense"): "Dispensed",
    ("Dispensed", "Deliver"): "Delivered",
}


def test_all_seventy_state_event_pairs_match_the_declared_edges():
    pairs_checked = 0
    for state in CustodyState:
        for kind in TxKind:
            pairs_checked += 1
            expected = DECLARED_EDGES.get((state.value, kind.value))
            if expected is None:
                with pytest.raises(IllegalTransition):
                    advance_custody(state, kind)
            else:
                assert advance_custody(state, kind) is CustodyState(expected)
    assert pairs_checked == 70


def test_replay_fold_skips_non_custody_events():
    for kind in (TxKind.PRODUCE, TxKind.COMPLAINT, TxKind.COMPLAINT_RESPONSE):
        assert apply_custody_event(CustodyState.DISTRIBUTED, kind) is CustodyState.DISTRIBUTED


def test_replay_fold_reopens_delivered_on_a_second_dispense():
    assert apply_custody_event(CustodyState.DELIVERED, TxKind.DISPENSE) is CustodyState.DISPENSED
    with pytest.raises(IllegalTransition):
        apply_custody_event(CustodyState.DELIVERED, TxKind.DISTRIBUTE)


def order(order_id, name, quantity, pharmacist_index=0, timestamp=NOW):
    return Order(
        order_id=order_id,
        pharmacist=node(Role.PHARMACIST, pharmacist_index),
        medicine_name=name,
        quantity=quantity,
        timestamp=timestamp,
    )


def test_no_orders_means_empty_demand():
    demand = collect_demand([])
    assert demand.current_demand == {}
    assert demand.past_orders == {}


def test_demand_sums_per_medicine():
    demand = collect_demand([order("o1", "A", 30), order("o2", "A", 70), order("o3", "B", 5)])
    assert demand.current_demand == {"A": 100, "B": 5}
    assert demand.past_orders == {"A": [30, 70], "B": [5]}


def test_demand_matches_brute_force_sum_over_random_orders():
    rng = random.Random(47)
    orders = [
        order(f"o{i}", rng.choice("ABCD"), rng.randint(1, 50)) for i in range(50)
    ]
    demand = collect_demand(orders)
    for name in "ABCD":
        total = sum(o.quantity for o in orders if o.medicine_name == name)
        assert demand.current_demand.get(name, 0) == total


def test_produce_one_batch_per_demanded_medicine(formulary, producer_key):
    payloads = PayloadStore()
    demand = collect_demand([order("o1", "Amoxicillin", 100)])
    batches, txs = produce(demand, formulary, NOW, producer_key, payloads)
    assert len(batches) == len(txs) == 1
    batch = batches[0]
    assert batch.quantity == 100
    assert batch.manufacture_date == NOW
    assert batch.expiry_date == NOW + 730 * DAY
    assert txs[0].kind is TxKind.PRODUCE
    assert json.loads(payloads.get(txs[0].tx_id)) == batch.to_dict()


def test_produce_rejects_unregistered_demand(formulary, producer_key):
    demand = collect_demand([order("o1", "Ghost", 5)])
    with pytest.raises(UnknownMedicine):
        produce(demand, formulary, NOW, producer_key, PayloadStore())


def test_produce_honours_per_batch_overrides(formulary, producer_key):
    demand = collect_demand([order("o1", "Amoxicillin", 10)])
    log = TemperatureLog((TemperatureReading("s1", NOW, 100),))
    withheld = QAReport(present=False, passed=False)
    batches, _ = produce(
        demand,
        formulary,
        NOW,
        producer_key,
        PayloadStore(),
        telemetry={0: log},
        qa_reports={0: withheld},
        expiry_overrides={0: NOW},
    )
    batch = batches[0]
    assert batch.temperature_log == log
    assert batch.qa_report == withheld
    assert batch.expiry_date == NOW
    assert batch.manufacture_date == NOW - 730 * DAY


def test_supplier_forwards_ample_shelf_life(supplier_key):
    batch = make_batch(expiry=NOW + 31 * DAY)
    decision, tx = supplier_check(
        batch, NOW, 30, custody=CustodyState.VALIDATED, supplier=supplier_key,
        payloads=PayloadStore(), forward_to=node(Role.DISTRIBUTOR),
    )
    assert decision is SupplierDecision.FORWARD
    assert tx.kind is TxKind.SUPPLIER_FORWARD


def test_supplier_returns_short_shelf_life(supplier_key):
    batch = make_batch(expiry=NOW + 29 * DAY)
    assert batch.expiry_date - NOW == 29 * DAY
    decision, tx = supplier_check(
        batch, NOW, 30, custody=CustodyState.VALIDATED, supplier=supplier_key,
        payloads=PayloadStore(),
    )
    assert decision is SupplierDecision.RETURN
    assert tx.kind is TxKind.SUPPLIER_RETURN


def test_supplier_refuses_unvalidated_batches(supplier_key):
    with pytest.raises(WrongState):
        supplier_check(
            make_batch(), NOW, 30, custody=CustodyState.PRODUCED, supplier=supplier_key,
            payloads=PayloadStore(),
        )


def cleared(*batches):
    return {b.batch_id: CustodyState.SUPPLIER_CLEARED for b in batches}


def test_exact_fill_has_no_shortfall(distributor_key):
    batch = make_batch(quantity=100)
    allocations, shortfalls, txs = distribute(
        [batch], [order("o1", "Amoxicillin", 100)],
        custody=cleared(batch), distributor=distributor_key, payloads=PayloadStore(), now=NOW,
    )
    assert [(a.quantity, a.order_id) for a in allocations] == [(100, "o1")]
    assert shortfalls == []
    assert len(txs) == 1


def test_arrival_order_fill_reports_shortfall(distributor_key):
    batch = make_batch(quantity=100)
    allocations, shortfalls, _ = distribute(
        [batch], [order("o1", "Amoxicillin", 60), order("o2", "Amoxicillin", 70)],
        custody=cleared(batch), distributor=distributor_key, payloads=PayloadStore(), now=NOW,
    )
    assert [(a.order_id, a.quantity) for a in allocations] == [("o1", 60), ("o2", 40)]
    assert [(s.order_id, s.missing) for s in shortfalls] == [("o2", 30)]


def test_earliest_expiry_goes_first(distributor_key):
    late = make_batch(batch_id="B-late", quantity=50, expiry=NOW + 10 * DAY)
    soon = make_batch(batch_id="B-soon", quantity=50, expiry=NOW + 5 * DAY)
    allocations, _, _ = distribute(
        [late, soon], [order("o1", "Amoxicillin", 1)],
        custody=cleared(late, soon), distributor=distributor_key, payloads=PayloadStore(), now=NOW,
    )
    assert [a.batch_id for a in allocations] == ["B-soon"]


def test_distribute_demands_cleared_custody(distributor_key):
    batch = make_batch()
    with pytest.raises(WrongState):
        distribute(
            [batch], [], custody={batch.batch_id: CustodyState.VALIDATED},
            distributor=distributor_key, payloads=PayloadStore(), now=NOW,
        )


def test_random_distribution_matches_greedy_oracle(distributor_key):
    rng = random.Random(83)
    batches = [
        make_batch(batch_id=f"B-{i}", quantity=rng.randint(10, 60), expiry=NOW + rng.randint(5, 90) * DAY)
        for i in range(4)
    ]
    orders = [order(f"o{i}", "Amoxicillin", rng.randint(5, 80)) for i in range(6)]
    allocations, shortfalls, _ = distribute(
        batches, orders, custody=cleared(*batches),
        distributor=distributor_key, payloads=PayloadStore(), now=NOW,
    )

    stock = {b.batch_id: b.quantity for b in batches}
    ranked = sorted(batches, key=lambda b: (b.expiry_date, b.batch_id))
    expected_fills = {}
    expected_short = {}
    for o in orders:
        need = o.quantity
        for b in ranked:
            take = min(stock[b.batch_id], need)
            stock[b.batch_id] -= take
            need -= take
            if take:
                expected_fills[(o.order_id, b.batch_id)] = take
        if need:
            expected_short[o.order_id] = need

    assert {(a.order_id, a.batch_id): a.quantity for a in allocations} == expected_fills
    assert {s.order_id: s.missing for s in shortfalls} == expected_short
    for b in batches:
        assert sum(a.quantity for a in allocations if a.batch_id == b.batch_id) <= b.quantity


def test_dispense_consumes_the_allocation(pharmacist_key):
    allocation = Allocation("B-000", node(Role.PHARMACIST), 10, "o1")
    book = {allocation.allocation_id: allocation}
    custody = {"B-000": CustodyState.DISTRIBUTED}
    payloads = PayloadStore()
    customer = node(Role.CUSTOMER)

    first, second = dispense(
        book, allocation.allocation_id, customer, NOW,
        pharmacist=pharmacist_key, custody=custody, payloads=payloads,
    )
    assert (first.kind, second.kind) == (TxKind.DISPENSE, TxKind.DELIVER)
    assert json.loads(payloads.get(second.tx_id))["customer"] == "customer-0"
    assert book == {}

    with pytest.raises(UnknownAllocation):
        dispense(
            book, allocation.allocation_id, customer, NOW,
            pharmacist=pharmacist_key, custody=custody, payloads=payloads,
        )


def test_dispense_needs_distributed_custody(pharmacist_key):
    allocation = Allocation("B-000", node(Role.PHARMACIST), 10, "o1")
    book = {allocation.allocation_id: allocation}
    with pytest.raises(WrongState):
        dispense(
            book, allocation.allocation_id, node(Role.CUSTOMER), NOW,
            pharmacist=pharmacist_key, custody={"B-000": CustodyState.SUPPLIER_CLEARED},
            payloads=PayloadStore(),
        )
    assert allocation.allocation_id in book


def test_recipient_may_complain_and_text_survives_byte_exact(customer_key):
    payloads = PayloadStore()
    recipients = {"B-000": {customer_key.owner}}
    description = "tablets arrived crumbled, café-au-lait discolouration"
    complaint, tx = submit_complaint(
        customer_key, "B-000", description, "C-001", recipients, NOW, payloads
    )
    assert complaint.status is ComplaintStatus.OPEN
    assert tx.kind is TxKind.COMPLAINT
    stored = json.loads(payloads.get(tx.tx_id))
    assert stored["description"] == description
    assert description.encode("utf-8") in payloads.get(tx.tx_id)


def test_non_recipient_cannot_complain(customer_key):
    with pytest.raises(NotRecipient):
        submit_complaint(
            customer_key, "B-000", "never saw it", "C-001", {}, NOW, PayloadStore()
        )


def test_producer_responds_once(producer_key, customer_key):
    payloads = PayloadStore()
    complaints = {
        "C-001": Complaint("C-001", customer_key.owner, "B-000", "crumbled")
    }
    updated, tx = respond_complaint(
        producer_key, "C-001", "replacement shipped", complaints, NOW, payloads
    )
    assert updated.status is ComplaintStatus.RESPONDED
    assert complaints["C-001"].response == "replacement shipped"
    assert tx.kind is TxKind.COMPLAINT_RESPONSE

    with pytest.raises(AlreadyResponded):
        respond_complaint(producer_key, "C-001", "again", complaints, NOW, payloads)
    with pytest.raises(UnknownComplaint):
        respond_complaint(producer_key, "C-404", "what", complaints, NOW, payloads)


def test_flow_value_invariants():
    with pytest.raises(ValueError):
        order("o1", "A", 0)
    with pytest.raises(ValueError):
        Allocation("B-000", node(Role.PHARMACIST), 0, "o1")
    with pytest.raises(ValueError):
        Complaint("C-1", node(Role.CUSTOMER), "B-000", "d", ComplaintStatus.RESPONDED, "")
    with pytest.raises(ValueError):
        Complaint("C-1", node(Role.CUSTOMER), "B-000", "d", ComplaintStatus.OPEN, "early")
