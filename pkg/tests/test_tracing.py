import dataclasses
import json

import pytest

from pharmachain.canonical import canonical_json
from pharmachain.custody import (
    CustodyState,
    Order,
    collect_demand,
    dispense,
    distribute,
    produce,
    respond_complaint,
    submit_complaint,
    supplier_check,
)
from pharmachain.custody import Complaint  # noqa: F401  (re-exported convenience)
from pharmachain.identity import Role, node
from pharmachain.ledger import (
    TxKind,
    append_block,
    build_block,
    make_genesis,
    new_chain,
    new_transaction,
)
from pharmachain.mining import TemperatureLog, TemperatureReading, mine_batches
from pharmachain.registry import MedicineListStore, MedicineSpec, PayloadStore
from pharmachain.tracing import (
    TraceReport,
    UnknownBatch,
    current_position,
    render_report,
    trace_history,
    verify_authenticity,
)

from conftest import keypair_for

NOW = 1_000_000
LOG_OK = TemperatureLog((TemperatureReading("s1", NOW, 130),))


class Flow:
    """A hand-driven run of the full supply path for one batch."""

    def __init__(self, *, telemetry_ok=True, stop_after=None):
        self.producer = keypair_for("producer", Role.PRODUCER)
        self.miner = keypair_for("miner", Role.MINER)
        self.supplier = keypair_for("supplier", Role.SUPPLIER)
        self.distributor = keypair_for("distributor", Role.DISTRIBUTOR)
        self.pharmacist = keypair_for("pharmacist", Role.PHARMACIST)
        self.customer = keypair_for("customer", Role.CUSTOMER)
        self.keys = {
            kp.owner: kp.public
            for kp in (
                self.producer, self.miner, self.supplier,
                self.distributor, self.pharmacist, self.customer,
            )
        }
        self.formulary = MedicineListStore()
        self.formulary.register(
            MedicineSpec("Amoxicillin", {"amoxicillin_trihydrate": 500}, 20, 250, 730)
        )
        self.payloads = PayloadStore()
        self.chain = new_chain(make_genesis(self.miner))
        self.orders = [
            Order("o1", self.pharmacist.owner, "Amoxicillin", 100, NOW, customer=self.customer.owner)
        ]
        self._run(telemetry_ok, stop_after or "deliver")

    def _append(self, txs, t):
        self.chain = append_block(
            self.chain, build_block(self.chain.head.header, txs, self.miner, t)
        )

    def _run(self, telemetry_ok, stop_after):
        demand = collect_demand(self.orders)
        telemetry = {0: LOG_OK} if telemetry_ok else {}
        self.batches, produce_txs = produce(
            demand, self.formulary, NOW, self.producer, self.payloads, telemetry=telemetry
        )
        self.batch = self.batches[0]
        self._append(produce_txs, NOW)
        if stop_after == "produce":
            return

        verdicts, self.chain = mine_batches(
            self.batches, self.formulary, demand, NOW + 10, self.miner, self.chain,
            self.payloads, forward_to=self.supplier.owner,
        )
        self.verdict = verdicts[0]
        if stop_after == "mine" or not self.verdict.accepted:
            return

        _, tx = supplier_check(
            self.batch, NOW + 20, 30, custody=CustodyState.VALIDATED,
            supplier=self.supplier, payloads=self.payloads, forward_to=self.distributor.owner,
        )
        self._append([tx], NOW + 20)
        if stop_after == "supplier":
            return

        custody = {self.batch.batch_id: CustodyState.SUPPLIER_CLEARED}
        self.allocations, _, txs = distribute(
            [self.batch], self.orders, custody=custody,
            distributor=self.distributor, payloads=self.payloads, now=NOW + 30,
        )
        self._append(txs, NOW + 30)
        if stop_after == "distribute":
            return

        book = {a.allocation_id: a for a in self.allocations}
        custody[self.batch.batch_id] = CustodyState.DISTRIBUTED
        d1, d2 = dispense(
            book, self.allocations[0].allocation_id, self.customer.owner, NOW + 40,
            pharmacist=self.pharmacist, custody=custody, payloads=self.payloads,
        )
        self._append([d1, d2], NOW + 40)


def test_delivered_batch_traces_all_six_steps():
    flow = Flow()
    report = trace_history(flow.batch.batch_id, flow.chain, flow.payloads)
    assert report.found
    assert [e.kind for e in report.events] == [
        TxKind.PRODUCE,
        TxKind.MINE_VERDICT,
        TxKind.SUPPLIER_FORWARD,
        TxKind.DISTRIBUTE,
        TxKind.DISPENSE,
        TxKind.DELIVER,
    ]
    assert report.final_state is CustodyState.DELIVERED
    assert report.position.node == flow.customer.owner
    assert report.position.role is Role.CUSTOMER


def test_rejected_batch_goes_back_to_the_producer():
    flow = Flow(telemetry_ok=False)
    assert not flow.verdict.accepted
    report = trace_history(flow.batch.batch_id, flow.chain, flow.payloads)
    assert [e.kind for e in report.events] == [TxKind.PRODUCE, TxKind.RETURN_TO_PRODUCER]
    assert report.final_state is CustodyState.RETURNED_TO_PRODUCER
    assert report.position.node == flow.producer.owner
    assert "Unsafe Temperature" in report.events[-1].detail


def test_unknown_batch_is_flagged_not_raised():
    flow = Flow()
    report = trace_history("B-404", flow.chain, flow.payloads)
    assert not report.found
    assert report.events == ()
    with pytest.raises(UnknownBatch):
        current_position("B-404", flow.chain, flow.payloads)


def test_position_tracks_each_leg():
    batch_id = "B-000"
    at_miner = Flow(stop_after="produce")
    assert current_position(batch_id, at_miner.chain, at_miner.payloads).node == at_miner.miner.owner

    at_supplier = Flow(stop_after="mine")
    assert (
        current_position(batch_id, at_supplier.chain, at_supplier.payloads).node
        == at_supplier.supplier.owner
    )

    at_pharmacist = Flow(stop_after="distribute")
    position = current_position(batch_id, at_pharmacist.chain, at_pharmacist.payloads)
    assert position.node == at_pharmacist.pharmacist.owner
    assert position.role is Role.PHARMACIST


def test_complaints_do_not_move_the_batch():
    flow = Flow()
    recipients = {flow.batch.batch_id: {flow.customer.owner}}
    complaint, c_tx = submit_complaint(
        flow.customer, flow.batch.batch_id, "crumbled", "C-001", recipients, NOW + 50, flow.payloads
    )
    flow._append([c_tx], NOW + 50)
    complaints = {"C-001": complaint}
    _, r_tx = respond_complaint(
        flow.producer, "C-001", "replacement shipped", complaints, NOW + 60, flow.payloads
    )
    flow._append([r_tx], NOW + 60)

    report = trace_history(flow.batch.batch_id, flow.chain, flow.payloads)
    assert len(report.events) == 8
    assert report.final_state is CustodyState.DELIVERED
    assert report.position.node == flow.customer.owner


def test_json_report_round_trips():
    flow = Flow()
    report = trace_history(flow.batch.batch_id, flow.chain, flow.payloads)
    rendered = render_report(report, "json")
    assert TraceReport.from_dict(json.loads(rendered)) == report


def test_text_report_is_one_line_per_event():
    flow = Flow()
    report = trace_history(flow.batch.batch_id, flow.chain, flow.payloads)
    text = render_report(report, "text")
    lines = text.splitlines()
    assert lines[0] == f"batch {flow.batch.batch_id}"
    assert len(lines) == 1 + len(report.events) + 2
    assert lines[-2].endswith("Delivered")


def test_appending_blocks_never_rewrites_history():
    flow = Flow(stop_after="distribute")
    before = trace_history(flow.batch.batch_id, flow.chain, flow.payloads).events

    book = {a.allocation_id: a for a in flow.allocations}
    custody = {flow.batch.batch_id: CustodyState.DISTRIBUTED}
    d1, d2 = dispense(
        book, flow.allocations[0].allocation_id, flow.customer.owner, NOW + 40,
        pharmacist=flow.pharmacist, custody=custody, payloads=flow.payloads,
    )
    flow._append([d1, d2], NOW + 40)

    after = trace_history(flow.batch.batch_id, flow.chain, flow.payloads).events
    assert after[: len(before)] == before
    assert len(after) == len(before) + 2


def test_clean_batch_is_authentic():
    flow = Flow()
    verdict = verify_authenticity(flow.batch.batch_id, flow.chain, flow.payloads, flow.keys)
    assert verdict.authentic
    assert verdict.findings == ()


def test_counterfeit_has_no_origin():
    flow = Flow()
    fake = new_transaction(
        flow.distributor, TxKind.DISTRIBUTE, "B-FAKE",
        canonical_json({"batch_id": "B-FAKE", "allocations": [], "timestamp": NOW + 90}),
        NOW + 90, flow.payloads,
    )
    flow._append([fake], NOW + 90)
    verdict = verify_authenticity("B-FAKE", flow.chain, flow.payloads, flow.keys)
    assert not verdict.authentic
    assert any(f.startswith("unknown batch origin") for f in verdict.findings)


def test_forged_signature_is_found():
    flow = Flow(stop_after="produce")
    outsider = keypair_for("outsider", Role.DISTRIBUTOR, 7)
    honest = new_transaction(
        flow.supplier, TxKind.SUPPLIER_FORWARD, flow.batch.batch_id,
        canonical_json({"batch_id": flow.batch.batch_id, "timestamp": NOW + 90}),
        NOW + 90, flow.payloads,
    )
    forged = dataclasses.replace(honest, signature=outsider.sign(honest.tx_id.value))
    demand = collect_demand(flow.orders)
    _, flow.chain = mine_batches(
        flow.batches, flow.formulary, demand, NOW + 10, flow.miner, flow.chain,
        flow.payloads, forward_to=flow.supplier.owner,
    )
    flow._append([forged], NOW + 90)
    verdict = verify_authenticity(flow.batch.batch_id, flow.chain, flow.payloads, flow.keys)
    assert not verdict.authentic
    assert any(f.startswith("signature failure") for f in verdict.findings)


def test_missing_payload_is_found():
    flow = Flow()
    target = flow.chain.blocks[-1].body[0].tx_id
    pruned = PayloadStore()
    for digest in flow.payloads.digests():
        if digest != target:
            pruned.put(flow.payloads.get(digest))
    verdict = verify_authenticity(flow.batch.batch_id, flow.chain, pruned, flow.keys)
    assert not verdict.authentic
    assert any(f.startswith("missing payload") for f in verdict.findings)


def test_skipped_custody_steps_are_found():
    flow = Flow(stop_after="produce")
    jump = new_transaction(
        flow.pharmacist, TxKind.DISPENSE, flow.batch.batch_id,
        canonical_json({"batch_id": flow.batch.batch_id, "timestamp": NOW + 5}),
        NOW + 5, flow.payloads,
    )
    flow._append([jump], NOW + 5)
    verdict = verify_authenticity(flow.batch.batch_id, flow.chain, flow.payloads, flow.keys)
    assert not verdict.authentic
    assert any(f.startswith("illegal transition") for f in verdict.findings)


def test_tampered_block_is_a_chain_link_failure():
    flow = Flow()
    victim = flow.chain.blocks[2]
    twisted = dataclasses.replace(
        victim, body=(dataclasses.replace(victim.body[0], timestamp=victim.body[0].timestamp + 1),)
    )
    blocks = list(flow.chain.blocks)
    blocks[2] = twisted
    tampered = dataclasses.replace(flow.chain, blocks=tuple(blocks))
    verdict = verify_authenticity(flow.batch.batch_id, tampered, flow.payloads, flow.keys)
    assert not verdict.authentic
    assert any(f.startswith("chain-link failure") for f in verdict.findings)
