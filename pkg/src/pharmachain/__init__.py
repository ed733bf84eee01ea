"""Lightweight blockchain model of a pharmaceutical supply chain.

A deterministic simulator of the producer-to-customer medicine flow: an
append-only hash-linked ledger, content-addressed payload storage, a
five-stage validation pipeline run by a miner role, a custody state
machine, seeded peer-to-peer gossip, and batch traceability with
authenticity checks. Everything is driven by scenario files; the same
seed always reproduces the same artifacts byte for byte.
"""

from .canonical import HashDigest, canonical_json
from .crypto import (
    DecryptFailure,
    KeyDirectory,
    KeyPair,
    PublicKey,
    decrypt,
    derive_keypair,
    encrypt,
    generate_keypair,
    seal_envelope,
    sign,
    verify,
)
from .custody import (
    Allocation,
    Complaint,
    CustodyState,
    IllegalTransition,
    Order,
    Shortfall,
    advance_custody,
    apply_custody_event,
    collect_demand,
    dispense,
    distribute,
    produce,
    supplier_check,
)
from .engine import ScenarioResult, check_invariants, run_scenario, write_artifacts
from .faults import InapplicableFault, apply_artifact_fault
from .identity import NodeId, Role, node
from .ledger import (
    Block,
    BlockHeader,
    Chain,
    Finding,
    IntegrityReport,
    TransactionRecord,
    TxKind,
    append_block,
    build_block,
    deserialize_chain,
    load_ledger,
    make_genesis,
    new_chain,
    new_transaction,
    save_ledger,
    serialize_chain,
    verify_chain,
    verify_ledger_bytes,
)
from .mining import (
    MedicineBatch,
    QAReport,
    Stage,
    TemperatureLog,
    TemperatureReading,
    Verdict,
    mine_batches,
    run_pipeline,
)
from .overlay import OverlayNetwork, SimConfig
from .registry import (
    MedicineListStore,
    MedicineSpec,
    PayloadStore,
    Snapshot,
    load_snapshot,
    save_snapshot,
)
from .scenario import (
    FaultKind,
    FaultSpec,
    Scenario,
    ScenarioError,
    load_scenario,
    parse_scenario,
    random_scenario,
    save_scenario,
)
from .tracing import (
    Position,
    TraceReport,
    UnknownBatch,
    current_position,
    render_report,
    trace_history,
    verify_authenticity,
)

__version__ = "0.1.0"
