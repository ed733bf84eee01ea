"""Walk one batch through the miner's five checks, then trip each one.

Run from the repository root:

    python3 demos/02_validation_pipeline.py
"""

from pharmachain.mining import (
    MedicineBatch,
    QAReport,
    TemperatureLog,
    TemperatureReading,
    run_pipeline,
)
from pharmachain.custody import collect_demand, Order
from pharmachain.identity import NodeId, Role
from pharmachain.registry import MedicineListStore, MedicineSpec

NOW = 1_000_000
formulary = MedicineListStore()
formulary.register(MedicineSpec(
    name="Amoxicillin",
    ingredients={"amoxicillin_trihydrate": 500},
    storage_temp_min=20, storage_temp_max=250,  # deci-degrees: 2.0 to 25.0 C
    shelf_life_days=730,
))
demand = collect_demand([
    Order("o-1", NodeId(Role.PHARMACIST, 0), "Amoxicillin", 30, NOW),
])


def batch(**overrides):
    fields = dict(
        batch_id="B-000",
        medicine_name="Amoxicillin",
        ingredients={"amoxicillin_trihydrate": 500},
        quantity=30,
        manufacture_date=NOW - 86400,
        expiry_date=NOW + 730 * 86400,
        temperature_log=TemperatureLog((
            TemperatureReading("probe-0", NOW - 3600, 135),
        )),
        qa_report=QAReport(present=True, passed=True),
    )
    fields.update(overrides)
    return MedicineBatch(**fields)


def show(title, candidate):
    verdict = run_pipeline(candidate, formulary, demand, NOW)
    outcome = "accepted" if verdict.accepted else f'rejected: "{verdict.label}"'
    stages = " > ".join(
        f"{r.stage.value}:{'pass' if r.passed else 'FAIL'}" for r in verdict.stages_run
    )
    print(f"{title:28s} {outcome}")
    print(f"{'':28s} [{stages}]")


show("clean batch", batch())
show("wrong ingredient amount", batch(ingredients={"amoxicillin_trihydrate": 400}))
show("unregistered ingredient", batch(ingredients={"amoxicillin_trihydrate": 500, "chalk": 10}))
show("short quantity", batch(quantity=20))
show("cold chain broken", batch(temperature_log=TemperatureLog((
    TemperatureReading("probe-0", NOW - 3600, 300),
))))
show("no sensor log", batch(temperature_log=TemperatureLog()))
show("expired", batch(expiry_date=NOW - 1))
show("QA failed", batch(qa_report=QAReport(present=True, passed=False, issues=("seal",))))
show("QA withheld", batch(qa_report=QAReport(present=False, passed=False)))
