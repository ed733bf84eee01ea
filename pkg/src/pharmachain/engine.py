"""End-to-end scenario execution.

One run walks the whole flow: collect orders, produce batches, mine
verdicts, recheck at the supplier, distribute, dispense, deliver. The
miner is the only block writer; after every appended block it broadcasts
the new head over the overlay. While acting, the engine keeps its own
plain event log per batch (never reconstructed from the chain), which
later serves as an independent witness for the chain-derived trace.

Runtime faults bend the inputs (a doctored expiry, a heat spike, a
withheld QA report, a counterfeit injection); artifact faults are applied
to the written ledger copy only, leaving the in-memory run honest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .canonical import canonical_json
from .crypto import KeyDirectory, KeyPair, derive_keypair, seal_envelope
from .custody import (
    Allocation,
    CustodyState,
    Shortfall,
    apply_custody_event,
    collect_demand,
    dispense,
    distribute,
    produce,
    supplier_check,
)
from .identity import NodeId, Role
from .ledger import (
    Chain,
    TxKind,
    append_block,
    build_block,
    make_genesis,
    new_chain,
    new_transaction,
    serialize_chain,
    verify_chain,
)
from .mining import MedicineBatch, QAReport, TemperatureLog, TemperatureReading, Verdict, mine_batches
from .overlay import OverlayNetwork, SimConfig, export_delivery_log
from .registry import MedicineListStore, PayloadStore, Snapshot, save_snapshot
from .scenario import ARTIFACT_FAULTS, FaultKind, Scenario, ScenarioError

PRODUCE_T = 10
MINE_T = 20
SUPPLIER_T = 30
DISTRIBUTE_T = 40
DISPENSE_T = 50
COUNTERFEIT_T = 60


@dataclass
class ScenarioResult:
    scenario: Scenario
    chain: Chain
    payloads: PayloadStore
    medicines: MedicineListStore
    keys: KeyDirectory
    keypairs: dict[NodeId, KeyPair]
    batches: list[MedicineBatch]
    verdicts: list[Verdict]
    allocations: list[Allocation]
    shortfalls: list[Shortfall]
    custody: dict[str, CustodyState]
    recipients: dict[str, set[NodeId]]
    ground_truth: dict
    delivery_log: list[dict]
    node_heads: dict[NodeId, str]
    summary: dict = field(default_factory=dict)


class _GroundTruth:
    """The engine's own diary of what it did to each batch."""

    def __init__(self) -> None:
        self.batches: dict[str, dict] = {}
        self.counterfeits: list[str] = []

    def record(self, batch_id: str, kind: TxKind, actor: NodeId, t: int,
               custodian: NodeId, state: str) -> None:
        entry = self.batches.setdefault(
            batch_id, {"events": [], "custodian": None, "state": None}
        )
        entry["events"].append({"kind": kind.value, "actor": str(actor), "t": t})
        entry["custodian"] = str(custodian)
        entry["state"] = state

    def to_dict(self) -> dict:
        return {"batches": self.batches, "counterfeits": self.counterfeits}


def _single(scenario: Scenario, role: Role) -> NodeId:
    return scenario.nodes_with_role(role)[0]


def run_scenario(scenario: Scenario) -> ScenarioResult:
    keypairs = {n: derive_keypair(scenario.seed, n) for n in scenario.nodes}
    keys = KeyDirectory()
    for n, kp in keypairs.items():
        keys.register(n, kp.public)

    medicines = MedicineListStore()
    for spec in scenario.medicines:
        medicines.register(spec)
    payloads = PayloadStore()

    producer = keypairs[_single(scenario, Role.PRODUCER)]
    miner = keypairs[_single(scenario, Role.MINER)]
    supplier = keypairs[_single(scenario, Role.SUPPLIER)]
    distributor = keypairs[_single(scenario, Role.DISTRIBUTOR)]

    net = OverlayNetwork(
        SimConfig(seed=scenario.seed, link_latency=scenario.link_latency,
                  drop_rate=scenario.drop_rate)
    )
    node_heads: dict[NodeId, str] = {}

    def note_head(_, me, env):
        if env.kind == "head" and env.is_broadcast:
            node_heads[me] = env.open_broadcast().decode()

    for n, kp in keypairs.items():
        net.join(n, kp.public)
        net.set_handler(n, note_head)

    chain = new_chain(make_genesis(miner))
    gt = _GroundTruth()

    def announce_head(t: int) -> None:
        net.now = max(net.now, t)
        digest = chain.head.header.digest().hex()
        node_heads[miner.owner] = digest
        net.broadcast(miner.owner, seal_envelope(miner, digest.encode(), kind="head"))
        net.run_until_quiescent()

    # Step 1: orders become demand, demand becomes batches.
    demand = collect_demand(scenario.orders)
    ordered_names: list[str] = []
    for order in scenario.orders:
        if order.medicine_name not in ordered_names:
            ordered_names.append(order.medicine_name)

    telemetry = dict(scenario.telemetry)
    qa_reports: dict[int, QAReport] = {}
    expiry_overrides: dict[int, int] = {}
    for fault in scenario.faults:
        if fault.kind in ARTIFACT_FAULTS or fault.kind is FaultKind.COUNTERFEIT_INJECT:
            continue
        if fault.target >= len(ordered_names):
            raise ScenarioError(
                f"fault {fault.kind.value}: target {fault.target} but only "
                f"{len(ordered_names)} batches will be produced"
            )
        spec = medicines.get(ordered_names[fault.target])
        if fault.kind is FaultKind.TEMPERATURE_SPIKE:
            telemetry[fault.target] = TemperatureLog(
                (
                    TemperatureReading("probe-0", 0, (spec.storage_temp_min + spec.storage_temp_max) // 2),
                    TemperatureReading("probe-0", 5, spec.storage_temp_max + 100),
                )
            )
        elif fault.kind is FaultKind.EXPIRE_BATCH:
            expiry_overrides[fault.target] = PRODUCE_T
        elif fault.kind is FaultKind.WITHHOLD_QA_REPORT:
            qa_reports[fault.target] = QAReport(present=False, passed=False)

    batches, produce_txs = produce(
        demand, medicines, PRODUCE_T, producer, payloads,
        order_of_appearance=ordered_names, telemetry=telemetry,
        qa_reports=qa_reports, expiry_overrides=expiry_overrides,
    )
    custody: dict[str, CustodyState] = {}
    if batches:
        chain = append_block(chain, build_block(chain.head.header, produce_txs, miner, PRODUCE_T))
        for batch in batches:
            custody[batch.batch_id] = CustodyState.PRODUCED
            gt.record(batch.batch_id, TxKind.PRODUCE, producer.owner, PRODUCE_T,
                      miner.owner, "Produced")
        announce_head(PRODUCE_T)
        net.now = max(net.now, PRODUCE_T)
        for batch in batches:
            envelope = seal_envelope(
                producer, canonical_json(batch.to_dict()),
                recipient=miner.owner, recipient_public=miner.public, kind="batch-data",
            )
            net.send(producer.owner, miner.owner, envelope)
        net.run_until_quiescent()

    # Step 2: the miner's five checks.
    verdicts, chain = mine_batches(
        list(batches), medicines, demand, MINE_T, miner, chain, payloads,
        forward_to=supplier.owner,
    )
    for batch, verdict in zip(batches, verdicts):
        if verdict.accepted:
            custody[batch.batch_id] = apply_custody_event(custody[batch.batch_id], TxKind.MINE_VERDICT)
            gt.record(batch.batch_id, TxKind.MINE_VERDICT, miner.owner, MINE_T,
                      supplier.owner, "Validated")
        else:
            custody[batch.batch_id] = apply_custody_event(custody[batch.batch_id], TxKind.RETURN_TO_PRODUCER)
            gt.record(batch.batch_id, TxKind.RETURN_TO_PRODUCER, miner.owner, MINE_T,
                      producer.owner, "ReturnedToProducer")
    if batches:
        announce_head(MINE_T)

    # Step 3: supplier shelf-life recheck.
    accepted = [b for b, v in zip(batches, verdicts) if v.accepted]
    supplier_txs = []
    cleared: list[MedicineBatch] = []
    for batch in accepted:
        decision, tx = supplier_check(
            batch, SUPPLIER_T, scenario.supplier_policy_days,
            custody=custody[batch.batch_id], supplier=supplier, payloads=payloads,
            forward_to=distributor.owner,
        )
        supplier_txs.append(tx)
        custody[batch.batch_id] = apply_custody_event(custody[batch.batch_id], tx.kind)
        if tx.kind is TxKind.SUPPLIER_FORWARD:
            cleared.append(batch)
            gt.record(batch.batch_id, TxKind.SUPPLIER_FORWARD, supplier.owner, SUPPLIER_T,
                      distributor.owner, "SupplierCleared")
        else:
            gt.record(batch.batch_id, TxKind.SUPPLIER_RETURN, supplier.owner, SUPPLIER_T,
                      producer.owner, "ReturnedToProducer")
    if supplier_txs:
        chain = append_block(chain, build_block(chain.head.header, supplier_txs, miner, SUPPLIER_T))
        announce_head(SUPPLIER_T)

    # Step 4: distribution against the original orders.
    allocations, shortfalls, dist_txs = distribute(
        cleared, list(scenario.orders), custody=custody,
        distributor=distributor, payloads=payloads, now=DISTRIBUTE_T,
    )
    if dist_txs:
        chain = append_block(chain, build_block(chain.head.header, dist_txs, miner, DISTRIBUTE_T))
        for batch in cleared:
            batch_allocs = [a for a in allocations if a.batch_id == batch.batch_id]
            if batch_allocs:
                custody[batch.batch_id] = apply_custody_event(custody[batch.batch_id], TxKind.DISTRIBUTE)
                gt.record(batch.batch_id, TxKind.DISTRIBUTE, distributor.owner, DISTRIBUTE_T,
                          batch_allocs[-1].pharmacist, "Distributed")
        announce_head(DISTRIBUTE_T)

    # Steps 5 and 6: pharmacists hand over to customers.
    orders_by_id = {o.order_id: o for o in scenario.orders}
    fallback_customers = sorted(scenario.nodes_with_role(Role.CUSTOMER), key=str)
    book = {a.allocation_id: a for a in allocations}
    recipients: dict[str, set[NodeId]] = {}
    dispense_txs = []
    for serial, allocation in enumerate(allocations):
        customer = orders_by_id[allocation.order_id].customer
        if customer is None and fallback_customers:
            customer = fallback_customers[serial % len(fallback_customers)]
        if customer is None:
            continue  # nobody to hand over to; custody stays with the pharmacist
        d_tx, v_tx = dispense(
            book, allocation.allocation_id, customer, DISPENSE_T,
            pharmacist=keypairs[allocation.pharmacist], custody=custody, payloads=payloads,
        )
        dispense_txs.extend((d_tx, v_tx))
        custody[allocation.batch_id] = apply_custody_event(custody[allocation.batch_id], TxKind.DISPENSE)
        gt.record(allocation.batch_id, TxKind.DISPENSE, allocation.pharmacist, DISPENSE_T,
                  allocation.pharmacist, "Dispensed")
        custody[allocation.batch_id] = apply_custody_event(custody[allocation.batch_id], TxKind.DELIVER)
        gt.record(allocation.batch_id, TxKind.DELIVER, allocation.pharmacist, DISPENSE_T,
                  customer, "Delivered")
        recipients.setdefault(allocation.batch_id, set()).add(customer)
    if dispense_txs:
        chain = append_block(chain, build_block(chain.head.header, dispense_txs, miner, DISPENSE_T))
        announce_head(DISPENSE_T)

    # Counterfeit injection: a Distribute record for a batch nobody produced,
    # signed with the distributor's real key.
    fake_txs = []
    for fault in scenario.faults:
        if fault.kind is FaultKind.COUNTERFEIT_INJECT:
            fake_id = f"B-FAKE-{fault.target:03d}"
            payload = canonical_json(
                {"batch_id": fake_id, "allocations": [], "timestamp": COUNTERFEIT_T}
            )
            fake_txs.append(
                new_transaction(distributor, TxKind.DISTRIBUTE, fake_id, payload,
                                COUNTERFEIT_T, payloads)
            )
            gt.counterfeits.append(fake_id)
    if fake_txs:
        chain = append_block(chain, build_block(chain.head.header, fake_txs, miner, COUNTERFEIT_T))
        announce_head(COUNTERFEIT_T)

    net.run_until_quiescent()

    rejected_by_label: dict[str, int] = {}
    for verdict in verdicts:
        if not verdict.accepted:
            rejected_by_label[verdict.label] = rejected_by_label.get(verdict.label, 0) + 1
    delivered = sum(1 for entry in gt.batches.values() if entry["state"] == "Delivered")
    summary = {
        "batches": len(batches),
        "accepted": sum(1 for v in verdicts if v.accepted),
        "rejected_by_label": dict(sorted(rejected_by_label.items())),
        "delivered": delivered,
        "shortfalls": [
            {"order_id": s.order_id, "medicine_name": s.medicine_name, "missing": s.missing}
            for s in shortfalls
        ],
    }

    return ScenarioResult(
        scenario=scenario,
        chain=chain,
        payloads=payloads,
        medicines=medicines,
        keys=keys,
        keypairs=keypairs,
        batches=list(batches),
        verdicts=list(verdicts),
        allocations=allocations,
        shortfalls=shortfalls,
        custody=custody,
        recipients=recipients,
        ground_truth=gt.to_dict(),
        delivery_log=net.delivery_log,
        node_heads=node_heads,
        summary=summary,
    )


def check_invariants(result: ScenarioResult) -> list[str]:
    """Post-run sanity: chain integrity, convergence, conservation, safety."""
    violations: list[str] = []

    report = verify_chain(result.chain, result.keys.as_mapping(), result.payloads)
    for finding in report.findings:
        violations.append(f"chain: {finding}")

    if result.scenario.drop_rate == 0:
        head = result.chain.head.header.digest().hex()
        for n in sorted(result.keypairs, key=str):
            if result.node_heads.get(n) != head:
                violations.append(f"overlay: {n} head differs from the miner head")

    allocated: dict[str, int] = {}
    for allocation in result.allocations:
        allocated[allocation.batch_id] = allocated.get(allocation.batch_id, 0) + allocation.quantity
    produced = {b.batch_id: b.quantity for b in result.batches}
    for batch_id, total in allocated.items():
        if total > produced.get(batch_id, 0):
            violations.append(f"conservation: batch {batch_id} allocated {total} of {produced.get(batch_id, 0)}")

    beyond = {CustodyState.SUPPLIER_CLEARED, CustodyState.DISTRIBUTED,
              CustodyState.DISPENSED, CustodyState.DELIVERED}
    for verdict in result.verdicts:
        if not verdict.accepted and result.custody.get(verdict.batch_id) in beyond:
            violations.append(f"safety: rejected batch {verdict.batch_id} advanced past validation")

    return violations


def write_artifacts(result: ScenarioResult, out_dir: str | Path) -> dict[str, Path]:
    """Write the run's files; artifact faults doctor the ledger copy only."""
    from .faults import apply_artifact_fault  # local import: faults also imports ledger

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ledger_bytes = serialize_chain(result.chain)
    miner = result.keypairs[_single(result.scenario, Role.MINER)]
    for fault in result.scenario.faults:
        if fault.kind in ARTIFACT_FAULTS:
            ledger_bytes = apply_artifact_fault(ledger_bytes, fault, miner=miner)

    paths = {
        "ledger": out / "ledger.ndjson",
        "snapshot": out / "snapshot.json",
        "delivery_log": out / "delivery_log.ndjson",
        "keys": out / "keys.json",
        "verdicts": out / "verdicts.json",
        "summary": out / "summary.json",
        "ground_truth": out / "ground_truth.json",
    }
    paths["ledger"].write_bytes(ledger_bytes)
    save_snapshot(Snapshot(medicines=result.medicines, payloads=result.payloads), paths["snapshot"])
    paths["delivery_log"].write_bytes(export_delivery_log(result.delivery_log))
    result.keys.save(paths["keys"])
    verdict_docs = [
        {
            "batch_id": v.batch_id,
            "accepted": v.accepted,
            "stage": v.stage.value if v.stage else None,
            "label": v.label,
            "warnings": list(v.warnings),
        }
        for v in result.verdicts
    ]
    paths["verdicts"].write_text(json.dumps(verdict_docs, indent=2, sort_keys=True) + "\n")
    paths["summary"].write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    paths["ground_truth"].write_text(json.dumps(result.ground_truth, indent=2, sort_keys=True) + "\n")
    return paths
