"""Scenario files: the JSON inputs that drive a simulation run.

A scenario pins everything a run needs: the seed (mandatory, never
defaulted), the formulary, the participating nodes, orders, per-batch
sensor telemetry, faults to inject, and the supplier's shelf-life policy.
Identical files replay to identical artifacts.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .identity import NodeId, Role
from .mining import TemperatureLog, TemperatureReading
from .custody import Order
from .registry import MedicineSpec


class ScenarioError(Exception):
    """The scenario file is malformed; the message names the offending field."""


class FaultKind(enum.Enum):
    COUNTERFEIT_INJECT = "CounterfeitInject"
    EXPIRE_BATCH = "ExpireBatch"
    TEMPERATURE_SPIKE = "TemperatureSpike"
    TAMPER_BLOCK = "TamperBlock"
    FORGE_SIGNATURE = "ForgeSignature"
    WITHHOLD_QA_REPORT = "WithholdQAReport"


# Faults woven into the run itself versus faults applied to written files.
RUNTIME_FAULTS = {
    FaultKind.COUNTERFEIT_INJECT,
    FaultKind.EXPIRE_BATCH,
    FaultKind.TEMPERATURE_SPIKE,
    FaultKind.WITHHOLD_QA_REPORT,
}
ARTIFACT_FAULTS = {FaultKind.TAMPER_BLOCK, FaultKind.FORGE_SIGNATURE}


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    target: int  # batch-origin index for runtime faults, block height otherwise
    parameters: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target, "parameters": dict(self.parameters)}

    @classmethod
    def from_dict(cls, doc: dict) -> "FaultSpec":
        try:
            kind = FaultKind(doc["kind"])
        except (KeyError, ValueError):
            raise ScenarioError(f"fault kind must be one of {[k.value for k in FaultKind]}") from None
        target = doc.get("target")
        if not isinstance(target, int) or isinstance(target, bool) or target < 0:
            raise ScenarioError("fault target must be a non-negative integer")
        parameters = doc.get("parameters", {})
        if not isinstance(parameters, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in parameters.items()
        ):
            raise ScenarioError("fault parameters must map strings to strings")
        return cls(kind=kind, target=target, parameters=dict(parameters))


@dataclass(frozen=True)
class Scenario:
    seed: int
    medicines: tuple[MedicineSpec, ...]
    nodes: tuple[NodeId, ...]
    orders: tuple[Order, ...]
    telemetry: dict[int, TemperatureLog] = field(default_factory=dict)
    faults: tuple[FaultSpec, ...] = ()
    supplier_policy_days: int = 30
    link_latency: int = 1
    drop_rate: float = 0.0

    def nodes_with_role(self, role: Role) -> tuple[NodeId, ...]:
        return tuple(n for n in self.nodes if n.role is role)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "medicines": [m.to_dict() for m in self.medicines],
            "nodes": [str(n) for n in self.nodes],
            "orders": [
                {
                    "order_id": o.order_id,
                    "pharmacist": str(o.pharmacist),
                    "medicine_name": o.medicine_name,
                    "quantity": o.quantity,
                    "timestamp": o.timestamp,
                    **({"customer": str(o.customer)} if o.customer else {}),
                }
                for o in self.orders
            ],
            "telemetry": {
                str(index): log.to_list() for index, log in sorted(self.telemetry.items())
            },
            "faults": [f.to_dict() for f in self.faults],
            "supplier_policy_days": self.supplier_policy_days,
            "link_latency": self.link_latency,
            "drop_rate": self.drop_rate,
        }


def _require(doc: dict, name: str):
    if name not in doc:
        raise ScenarioError(f"scenario is missing required field {name!r}")
    return doc[name]


def _parse_node(text, what: str) -> NodeId:
    if not isinstance(text, str):
        raise ScenarioError(f"{what} must be a node id string")
    try:
        return NodeId.parse(text)
    except ValueError as exc:
        raise ScenarioError(f"{what}: {exc}") from None


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")

    seed = _require(doc, "seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("seed must be an integer (and is never defaulted)")

    medicines = []
    for entry in _require(doc, "medicines"):
        try:
            spec = MedicineSpec.from_dict(entry)
            spec.validate()
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"medicines: bad entry ({exc})") from None
        except Exception as exc:
            raise ScenarioError(f"medicines: {exc}") from None
        medicines.append(spec)
    names = [m.name for m in medicines]
    if len(set(names)) != len(names):
        raise ScenarioError("medicines: duplicate names")

    nodes = [_parse_node(n, "nodes") for n in _require(doc, "nodes")]
    if len(set(nodes)) != len(nodes):
        raise ScenarioError("nodes: duplicate node ids")
    for role in (Role.PRODUCER, Role.MINER, Role.SUPPLIER, Role.DISTRIBUTOR):
        count = sum(1 for n in nodes if n.role is role)
        if count != 1:
            raise ScenarioError(f"nodes: need exactly one {role.value} node, found {count}")

    node_set = set(nodes)
    orders = []
    order_ids = set()
    for entry in _require(doc, "orders"):
        if not isinstance(entry, dict):
            raise ScenarioError("orders: each order must be an object")
        try:
            order = Order(
                order_id=entry["order_id"],
                pharmacist=_parse_node(entry["pharmacist"], "orders.pharmacist"),
                medicine_name=entry["medicine_name"],
                quantity=entry["quantity"],
                timestamp=entry["timestamp"],
                customer=_parse_node(entry["customer"], "orders.customer")
                if "customer" in entry
                else None,
            )
        except KeyError as exc:
            raise ScenarioError(f"orders: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"orders: {exc}") from None
        if order.medicine_name not in names:
            raise ScenarioError(f"orders: medicine {order.medicine_name!r} is not registered")
        if order.pharmacist not in node_set:
            raise ScenarioError(f"orders: pharmacist {order.pharmacist} is not a scenario node")
        if order.customer is not None and order.customer not in node_set:
            raise ScenarioError(f"orders: customer {order.customer} is not a scenario node")
        if order.order_id in order_ids:
            raise ScenarioError(f"orders: duplicate order_id {order.order_id!r}")
        order_ids.add(order.order_id)
        orders.append(order)

    telemetry = {}
    for key, readings in doc.get("telemetry", {}).items():
        try:
            index = int(key)
        except (TypeError, ValueError):
            raise ScenarioError(f"telemetry: key {key!r} is not a batch index") from None
        try:
            telemetry[index] = TemperatureLog.from_list(readings)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"telemetry[{key}]: {exc}") from None

    faults = tuple(FaultSpec.from_dict(f) for f in doc.get("faults", []))

    policy = doc.get("supplier_policy_days", 30)
    if not isinstance(policy, int) or isinstance(policy, bool) or policy < 0:
        raise ScenarioError("supplier_policy_days must be a non-negative integer")
    latency = doc.get("link_latency", 1)
    if not isinstance(latency, int) or isinstance(latency, bool) or latency < 0:
        raise ScenarioError("link_latency must be a non-negative integer")
    drop_rate = doc.get("drop_rate", 0.0)
    if not isinstance(drop_rate, (int, float)) or isinstance(drop_rate, bool) or not 0 <= drop_rate <= 1:
        raise ScenarioError("drop_rate must lie in [0, 1]")

    return Scenario(
        seed=seed,
        medicines=tuple(medicines),
        nodes=tuple(nodes),
        orders=tuple(orders),
        telemetry=telemetry,
        faults=faults,
        supplier_policy_days=policy,
        link_latency=latency,
        drop_rate=float(drop_rate),
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from None
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    return parse_scenario(doc)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n")


MEDICINE_POOL = (
    ("Amoxicillin", {"amoxicillin_trihydrate": 500}, 20, 250),
    ("Ibuprofen", {"ibuprofen": 200, "cellulose": 90}, 150, 300),
    ("Insulin", {"insulin_glargine": 100}, 20, 80),
    ("Paracetamol", {"paracetamol": 500, "starch": 50}, 150, 250),
)


def random_scenario(seed: int, *, max_batches: int = 20, max_orders: int = 50) -> Scenario:
    """A seeded scenario mixing clean, rejected, and supplier-returned paths.

    The generator only varies inputs (shelf life, telemetry, quantities);
    the run itself stays fault-free, which is what the trace-equivalence
    oracle wants: lots of distinct histories, all honest.
    """
    rng = random.Random(seed)
    policy = 30
    n_medicines = rng.randint(1, min(max_batches, len(MEDICINE_POOL)))
    chosen = rng.sample(MEDICINE_POOL, n_medicines)
    medicines = []
    for name, ingredients, lo, hi in chosen:
        if rng.random() < 0.2:
            shelf = rng.randint(1, policy)  # will bounce at the supplier
        else:
            shelf = policy + rng.randint(2, 300)
        medicines.append(MedicineSpec(name, dict(ingredients), lo, hi, shelf))

    pharmacists = [NodeId(Role.PHARMACIST, i) for i in range(rng.randint(1, 3))]
    customers = [NodeId(Role.CUSTOMER, i) for i in range(rng.randint(1, 4))]
    nodes = (
        [NodeId(Role.PRODUCER, 0), NodeId(Role.MINER, 0), NodeId(Role.SUPPLIER, 0),
         NodeId(Role.DISTRIBUTOR, 0)] + pharmacists + customers
    )

    orders = []
    for i in range(rng.randint(1, max_orders)):
        orders.append(
            Order(
                order_id=f"o-{i:03d}",
                pharmacist=rng.choice(pharmacists),
                medicine_name=rng.choice(medicines).name,
                quantity=rng.randint(1, 40),
                timestamp=i,
                customer=rng.choice(customers),
            )
        )

    ordered_names = []
    for order in orders:
        if order.medicine_name not in ordered_names:
            ordered_names.append(order.medicine_name)
    by_name = {m.name: m for m in medicines}
    telemetry = {}
    for index, name in enumerate(ordered_names):
        spec = by_name[name]
        roll = rng.random()
        if roll < 0.15:
            continue  # missing report: rejected at the temperature stage
        if roll < 0.3:
            temp = spec.storage_temp_max + rng.randint(1, 50)  # cold chain broken
        else:
            temp = (spec.storage_temp_min + spec.storage_temp_max) // 2
        telemetry[index] = TemperatureLog(
            (TemperatureReading("probe-0", 0, temp), TemperatureReading("probe-0", 5, temp))
        )

    return Scenario(
        seed=seed,
        medicines=tuple(medicines),
        nodes=tuple(nodes),
        orders=tuple(orders),
        telemetry=telemetry,
        faults=(),
        supplier_policy_days=policy,
    )
