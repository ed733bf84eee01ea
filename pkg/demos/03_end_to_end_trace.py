"""Run a bundled scenario in-process and trace every batch it produced.

Run from the repository root:

    python3 demos/03_end_to_end_trace.py
"""

from pathlib import Path

from pharmachain.engine import run_scenario
from pharmachain.scenario import load_scenario
from pharmachain.tracing import render_report, trace_history, verify_authenticity

scenario_path = Path(__file__).resolve().parent.parent / "scenarios" / "clean" / "base-03.json"
scenario = load_scenario(scenario_path)
print(f"scenario: {scenario_path.name} (seed {scenario.seed}, "
      f"{len(scenario.orders)} orders, {len(scenario.medicines)} medicines)\n")

result = run_scenario(scenario)
print("summary:", result.summary, "\n")

keys = result.keys.as_mapping()
for batch in result.batches:
    report = trace_history(batch.batch_id, result.chain, result.payloads)
    print(render_report(report, "text"))
    verdict = verify_authenticity(batch.batch_id, result.chain, result.payloads, keys)
    print(f"  authentic: {verdict.authentic}\n")
