"""Regenerate the bundled scenario corpus.

Five clean base scenarios, then one variant per fault kind for each base.
A fault file is byte-identical to its base except for the faults array, so
clean/fault pairs isolate exactly one cause. Run from the repository root:

    python3 scripts/make_corpus.py
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
POOL = {
    "Amoxicillin": ({"amoxicillin_trihydrate": 500}, 20, 250, 365),
    "Ibuprofen": ({"ibuprofen": 200, "cellulose": 90}, 150, 300, 720),
    "Insulin": ({"insulin_glargine": 100}, 20, 80, 90),
    "Paracetamol": ({"paracetamol": 500, "starch": 50}, 150, 250, 540),
}

BASES = [
    # (seed, medicines, pharmacists, customers, orders as (medicine, qty, pharm, cust))
    (101, ["Amoxicillin"], 1, 1, [("Amoxicillin", 10, 0, 0)]),
    (202, ["Amoxicillin", "Ibuprofen"], 2, 2,
     [("Amoxicillin", 12, 0, 0), ("Ibuprofen", 30, 1, 1),
      ("Amoxicillin", 5, 1, 0), ("Ibuprofen", 8, 0, 1)]),
    (303, ["Amoxicillin", "Ibuprofen", "Insulin"], 2, 3,
     [("Insulin", 6, 0, 2), ("Amoxicillin", 20, 1, 0), ("Ibuprofen", 15, 0, 1),
      ("Insulin", 4, 1, 2), ("Amoxicillin", 9, 0, 1), ("Ibuprofen", 3, 1, 0)]),
    (404, ["Amoxicillin", "Ibuprofen", "Insulin", "Paracetamol"], 3, 4,
     [("Paracetamol", 40, 0, 3), ("Insulin", 2, 1, 0), ("Amoxicillin", 18, 2, 1),
      ("Ibuprofen", 25, 0, 2), ("Paracetamol", 10, 1, 3), ("Insulin", 5, 2, 0),
      ("Amoxicillin", 7, 0, 2), ("Ibuprofen", 11, 1, 1)]),
    (505, ["Insulin", "Paracetamol"], 1, 2,
     [("Insulin", 3, 0, 0), ("Paracetamol", 22, 0, 1), ("Insulin", 8, 0, 1),
      ("Paracetamol", 14, 0, 0), ("Insulin", 1, 0, 0)]),
]

# Block heights in a clean run: 0 genesis, 1 produce, 2 verdicts,
# 3 supplier, 4 distribute, 5 dispense.
FAULTS = [
    ("counterfeit", "CounterfeitInject", lambda i, nb: (i, {})),
    ("expired", "ExpireBatch", lambda i, nb: (i % nb, {})),
    ("tempspike", "TemperatureSpike", lambda i, nb: ((i + 1) % nb, {})),
    ("withheldqa", "WithholdQAReport", lambda i, nb: ((i + 2) % nb, {})),
    ("tamper", "TamperBlock", lambda i, nb: (i % 6, {})),
    ("forgesig", "ForgeSignature", lambda i, nb: (1 + i % 5, {"tx_index": "0"})),
]


def base_doc(seed, meds, n_pharm, n_cust, orders):
    medicines = []
    for name in meds:
        ingredients, lo, hi, shelf = POOL[name]
        medicines.append({
            "name": name, "ingredients": ingredients,
            "storage_temp_min": lo, "storage_temp_max": hi,
            "shelf_life_days": shelf,
        })
    nodes = ["producer-0", "miner-0", "supplier-0", "distributor-0"]
    nodes += [f"pharmacist-{i}" for i in range(n_pharm)]
    nodes += [f"customer-{i}" for i in range(n_cust)]

    order_docs = []
    ordered_names = []
    for n, (med, qty, pharm, cust) in enumerate(orders):
        order_docs.append({
            "order_id": f"o-{n:03d}", "pharmacist": f"pharmacist-{pharm}",
            "medicine_name": med, "quantity": qty, "timestamp": n,
            "customer": f"customer-{cust}",
        })
        if med not in ordered_names:
            ordered_names.append(med)

    telemetry = {}
    for index, med in enumerate(ordered_names):
        _, lo, hi, _ = POOL[med]
        mid = (lo + hi) // 2
        telemetry[str(index)] = [
            {"sensor_id": "probe-0", "timestamp": 0, "temp": mid},
            {"sensor_id": "probe-0", "timestamp": 3600, "temp": mid},
        ]

    return {
        "seed": seed, "medicines": medicines, "nodes": nodes,
        "orders": order_docs, "telemetry": telemetry, "faults": [],
        "supplier_policy_days": 30,
    }


def main():
    clean_dir = ROOT / "scenarios" / "clean"
    fault_dir = ROOT / "scenarios" / "faults"
    clean_dir.mkdir(parents=True, exist_ok=True)
    fault_dir.mkdir(parents=True, exist_ok=True)

    for i, (seed, meds, n_pharm, n_cust, orders) in enumerate(BASES):
        doc = base_doc(seed, meds, n_pharm, n_cust, orders)
        n_batches = len({o[0] for o in orders})
        (clean_dir / f"base-{i + 1:02d}.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n"
        )
        for slug, kind, pick in FAULTS:
            target, parameters = pick(i, n_batches)
            if kind == "ForgeSignature":
                parameters = dict(parameters, seed=str(seed))
            variant = dict(doc)
            variant["faults"] = [{"kind": kind, "target": target, "parameters": parameters}]
            (fault_dir / f"{slug}-{i + 1:02d}.json").write_text(
                json.dumps(variant, indent=2, sort_keys=True) + "\n"
            )
    print(f"wrote {len(BASES)} clean + {len(BASES) * len(FAULTS)} fault scenarios")


if __name__ == "__main__":
    main()
