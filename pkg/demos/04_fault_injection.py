"""Stage two attacks on a written ledger and let the verifier catch both.

TamperBlock edits a recorded value without fixing hashes; ForgeSignature
swaps a transaction signature and repairs everything a complicit miner
could repair. Run from the repository root:

    python3 demos/04_fault_injection.py
"""

import tempfile
from pathlib import Path

from pharmachain.engine import run_scenario, write_artifacts
from pharmachain.faults import forge_signature, tamper_block
from pharmachain.ledger import verify_ledger_bytes
from pharmachain.scenario import FaultKind, FaultSpec, load_scenario
from pharmachain.tracing import verify_authenticity
from pharmachain.ledger import deserialize_chain

root = Path(__file__).resolve().parent.parent
result = run_scenario(load_scenario(root / "scenarios" / "clean" / "base-01.json"))
keys = result.keys.as_mapping()

with tempfile.TemporaryDirectory() as tmp:
    paths = write_artifacts(result, tmp)
    data = paths["ledger"].read_bytes()

print("clean ledger:", "valid =", verify_ledger_bytes(data, keys, result.payloads).valid)

tampered = tamper_block(data, FaultSpec(FaultKind.TAMPER_BLOCK, target=2))
report = verify_ledger_bytes(tampered, keys, result.payloads)
print("\nafter TamperBlock at height 2:")
for finding in report.findings:
    print(f"  block {finding.height}: {finding.category}: {finding.detail}")

miner = next(kp for kp in result.keypairs.values() if str(kp.owner) == "miner-0")
forged = forge_signature(
    data, FaultSpec(FaultKind.FORGE_SIGNATURE, target=5, parameters={"tx_index": "0"}),
    miner=miner,
)
report = verify_ledger_bytes(forged, keys, result.payloads)
print("\nafter ForgeSignature on the Dispense transaction (height 5):")
for finding in report.findings:
    print(f"  block {finding.height}: {finding.category}: {finding.detail}")

verdict = verify_authenticity("B-000", deserialize_chain(forged), result.payloads, keys)
print(f"\nbatch B-000 authenticity after forgery: {verdict.authentic}")
for text in verdict.findings:
    print(f"  {text}")
