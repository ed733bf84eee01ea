"""Five-stage batch validation run by the miner.

A batch is checked in a fixed order: ingredients, production amount,
temperature history, expiry, quality assurance. The first failing stage
rejects the batch with that stage's label and later stages never run.
Accepted batches get a MineVerdict transaction, rejected ones a
ReturnToProducer transaction; one call appends at most one block.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .canonical import canonical_json
from .crypto import KeyPair
from .identity import NodeId
from .ledger import Chain, TxKind, append_block, build_block, new_transaction
from .registry import MedicineListStore, PayloadStore


class Stage(enum.Enum):
    INGREDIENTS = "Ingredients"
    PRODUCTION_AMOUNT = "ProductionAmount"
    TEMPERATURE = "Temperature"
    EXPIRY = "Expiry"
    QUALITY = "Quality"


PIPELINE = (
    Stage.INGREDIENTS,
    Stage.PRODUCTION_AMOUNT,
    Stage.TEMPERATURE,
    Stage.EXPIRY,
    Stage.QUALITY,
)

REJECTION_LABELS = {
    Stage.INGREDIENTS: "Inaccurate Ingredients",
    Stage.PRODUCTION_AMOUNT: "Insufficient quantity",
    Stage.TEMPERATURE: "Unsafe Temperature",
    Stage.EXPIRY: "Date Expired",
    Stage.QUALITY: "Quality Assurance Problem",
}


@dataclass(frozen=True)
class TemperatureReading:
    sensor_id: str
    timestamp: int
    temp: int  # deci-degrees Celsius

    def to_dict(self) -> dict:
        return {"sensor_id": self.sensor_id, "timestamp": self.timestamp, "temp": self.temp}

    @classmethod
    def from_dict(cls, doc: dict) -> "TemperatureReading":
        return cls(sensor_id=doc["sensor_id"], timestamp=doc["timestamp"], temp=doc["temp"])


@dataclass(frozen=True)
class TemperatureLog:
    """Ordered sensor readings; an empty log means the report is missing."""

    readings: tuple[TemperatureReading, ...] = ()

    def __post_init__(self) -> None:
        stamps = [r.timestamp for r in self.readings]
        if stamps != sorted(stamps):
            raise ValueError("temperature readings must have non-decreasing timestamps")

    def __len__(self) -> int:
        return len(self.readings)

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.readings]

    @classmethod
    def from_list(cls, docs: list[dict]) -> "TemperatureLog":
        return cls(readings=tuple(TemperatureReading.from_dict(d) for d in docs))


@dataclass(frozen=True)
class QAReport:
    present: bool
    passed: bool
    issues: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.passed and self.issues:
            raise ValueError("a passing QA report cannot list issues")

    def to_dict(self) -> dict:
        return {"present": self.present, "passed": self.passed, "issues": list(self.issues)}

    @classmethod
    def from_dict(cls, doc: dict) -> "QAReport":
        return cls(present=doc["present"], passed=doc["passed"], issues=tuple(doc["issues"]))


MISSING_QA = QAReport(present=False, passed=False)


@dataclass(frozen=True)
class MedicineBatch:
    batch_id: str
    medicine_name: str
    ingredients: dict[str, int]  # ingredient name -> integer milligrams
    quantity: int
    manufacture_date: int
    expiry_date: int
    temperature_log: TemperatureLog = TemperatureLog()
    qa_report: QAReport = MISSING_QA

    def __post_init__(self) -> None:
        if self.quantity <= 0:
            raise ValueError("batch quantity must be positive")
        if self.expiry_date <= self.manufacture_date:
            raise ValueError("expiry_date must be after manufacture_date")

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "medicine_name": self.medicine_name,
            "ingredients": dict(sorted(self.ingredients.items())),
            "quantity": self.quantity,
            "manufacture_date": self.manufacture_date,
            "expiry_date": self.expiry_date,
            "temperature_log": self.temperature_log.to_list(),
            "qa_report": self.qa_report.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MedicineBatch":
        return cls(
            batch_id=doc["batch_id"],
            medicine_name=doc["medicine_name"],
            ingredients=dict(doc["ingredients"]),
            quantity=doc["quantity"],
            manufacture_date=doc["manufacture_date"],
            expiry_date=doc["expiry_date"],
            temperature_log=TemperatureLog.from_list(doc["temperature_log"]),
            qa_report=QAReport.from_dict(doc["qa_report"]),
        )


@dataclass
class DemandLedger:
    """Current demand per medicine plus the trail of past order quantities."""

    current_demand: dict[str, int] = field(default_factory=dict)
    past_orders: dict[str, list[int]] = field(default_factory=dict)

    def demand_for(self, medicine_name: str) -> int:
        return self.current_demand.get(medicine_name, 0)


@dataclass(frozen=True)
class StageResult:
    stage: Stage
    passed: bool
    label: str = ""

    def __post_init__(self) -> None:
        if self.passed == bool(self.label):
            raise ValueError("exactly one of passed / label must hold")

    def to_dict(self) -> dict:
        return {"stage": self.stage.value, "passed": self.passed, "label": self.label}


@dataclass(frozen=True)
class Verdict:
    """Outcome of the pipeline for one batch.

    ``stages_run`` is always a prefix of the pipeline; on rejection its last
    entry is the failing stage, on acceptance all five appear and passed.
    ``warnings`` carry advisory notes (over-production) and never reject.
    """

    batch_id: str
    accepted: bool
    stage: Stage | None  # failing stage, None when accepted
    label: str  # rejection label, empty when accepted
    stages_run: tuple[StageResult, ...]
    warnings: tuple[str, ...] = ()


def _fail(stage: Stage) -> StageResult:
    return StageResult(stage=stage, passed=False, label=REJECTION_LABELS[stage])


def check_ingredients(
    batch: MedicineBatch, formulary: MedicineListStore, *, tolerance: float = 0.0
) -> StageResult:
    """Compare amounts against the registered spec; unregistered fails too.

    ``tolerance`` is a relative slack per ingredient, zero by default, so the
    stock rule is exact integer-milligram equality.
    """
    spec = formulary.get(batch.medicine_name)
    if spec is None or set(batch.ingredients) != set(spec.ingredients):
        return _fail(Stage.INGREDIENTS)
    for name, amount in spec.ingredients.items():
        if abs(batch.ingredients[name] - amount) > tolerance * amount:
            return _fail(Stage.INGREDIENTS)
    return StageResult(stage=Stage.INGREDIENTS, passed=True)


def check_production_amount(batch: MedicineBatch, demand: DemandLedger) -> StageResult:
    if batch.quantity >= demand.demand_for(batch.medicine_name):
        return StageResult(stage=Stage.PRODUCTION_AMOUNT, passed=True)
    return _fail(Stage.PRODUCTION_AMOUNT)


def check_temperature(batch: MedicineBatch, formulary: MedicineListStore) -> StageResult:
    spec = formulary.get(batch.medicine_name)
    if spec is None or len(batch.temperature_log) == 0:
        return _fail(Stage.TEMPERATURE)
    for reading in batch.temperature_log.readings:
        if not spec.storage_temp_min <= reading.temp <= spec.storage_temp_max:
            return _fail(Stage.TEMPERATURE)
    return StageResult(stage=Stage.TEMPERATURE, passed=True)


def check_expiry(batch: MedicineBatch, now: int) -> StageResult:
    if batch.expiry_date > now:
        return StageResult(stage=Stage.EXPIRY, passed=True)
    return _fail(Stage.EXPIRY)


def check_quality(batch: MedicineBatch) -> StageResult:
    if batch.qa_report.present and batch.qa_report.passed:
        return StageResult(stage=Stage.QUALITY, passed=True)
    return _fail(Stage.QUALITY)


def _overproduction_warnings(batch: MedicineBatch, demand: DemandLedger) -> tuple[str, ...]:
    history = demand.past_orders.get(batch.medicine_name, [])
    needed = demand.demand_for(batch.medicine_name)
    if history and batch.quantity > needed and batch.quantity > max(history):
        return (
            f"over-production: quantity {batch.quantity} exceeds current demand "
            f"{needed} and every past order",
        )
    return ()


def run_pipeline(
    batch: MedicineBatch,
    formulary: MedicineListStore,
    demand: DemandLedger,
    now: int,
    *,
    tolerance: float = 0.0,
) -> Verdict:
    """Run the five stages in order, stopping at the first failure."""
    checks = (
        lambda: check_ingredients(batch, formulary, tolerance=tolerance),
        lambda: check_production_amount(batch, demand),
        lambda: check_temperature(batch, formulary),
        lambda: check_expiry(batch, now),
        lambda: check_quality(batch),
    )
    warnings = _overproduction_warnings(batch, demand)
    results: list[StageResult] = []
    for check in checks:
        result = check()
        results.append(result)
        if not result.passed:
            return Verdict(
                batch_id=batch.batch_id,
                accepted=False,
                stage=result.stage,
                label=result.label,
                stages_run=tuple(results),
                warnings=warnings,
            )
    return Verdict(
        batch_id=batch.batch_id,
        accepted=True,
        stage=None,
        label="",
        stages_run=tuple(results),
        warnings=warnings,
    )


def verdict_payload(verdict: Verdict, batch: MedicineBatch, now: int, forward_to: NodeId | None) -> bytes:
    doc = {
        "batch_id": verdict.batch_id,
        "medicine_name": batch.medicine_name,
        "outcome": "Accepted" if verdict.accepted else "Rejected",
        "stages": [r.to_dict() for r in verdict.stages_run],
        "warnings": list(verdict.warnings),
        "timestamp": now,
    }
    if not verdict.accepted:
        doc["stage"] = verdict.stage.value
        doc["label"] = verdict.label
    elif forward_to is not None:
        doc["forwarded_to"] = str(forward_to)
    return canonical_json(doc)


def mine_batches(
    batches: list[MedicineBatch] | tuple[MedicineBatch, ...],
    formulary: MedicineListStore,
    demand: DemandLedger,
    now: int,
    miner: KeyPair,
    chain: Chain,
    payloads: PayloadStore,
    *,
    forward_to: NodeId | None = None,
    tolerance: float = 0.0,
) -> tuple[tuple[Verdict, ...], Chain]:
    """Validate every batch and append one block holding all verdicts.

    Accepted batches are routed onward (``forward_to`` lands in the payload
    so a later reader can tell where custody went); rejected ones go back to
    the producer. An empty batch list leaves the chain untouched.
    """
    verdicts = tuple(
        run_pipeline(batch, formulary, demand, now, tolerance=tolerance) for batch in batches
    )
    if not verdicts:
        return verdicts, chain
    txs = []
    for batch, verdict in zip(batches, verdicts):
        kind = TxKind.MINE_VERDICT if verdict.accepted else TxKind.RETURN_TO_PRODUCER
        payload = verdict_payload(verdict, batch, now, forward_to)
        txs.append(new_transaction(miner, kind, batch.batch_id, payload, now, payloads))
    new_chain = append_block(chain, build_block(chain.head.header, txs, miner, timestamp=now))
    return verdicts, new_chain
