"""Command-line front end: run scenarios, trace batches, verify artifacts.

Exit codes are part of the contract: 0 clean, 1 input error, 2 post-run
invariant failure, 3 unknown batch, 4 verification findings.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import check_invariants, run_scenario, write_artifacts
from .faults import InapplicableFault, apply_artifact_fault
from .ledger import deserialize_chain, verify_ledger_bytes
from .registry import Snapshot, SnapshotIntegrityError, load_snapshot
from .crypto import KeyDirectory
from .scenario import FaultSpec, ScenarioError, load_scenario
from .tracing import render_report, trace_history, verify_authenticity

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INVARIANT = 2
EXIT_UNKNOWN_BATCH = 3
EXIT_FINDINGS = 4


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INPUT


def _read_bytes(path: str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ScenarioError(f"cannot read {what}: {exc}") from None


def _load_snapshot(path: str) -> Snapshot:
    try:
        return load_snapshot(path)
    except (OSError, ValueError, SnapshotIntegrityError) as exc:
        raise ScenarioError(f"snapshot: {exc}") from None


def _load_keys(path: str) -> KeyDirectory:
    try:
        return KeyDirectory.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ScenarioError(f"keys: {exc}") from None


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
        result = run_scenario(scenario)
    except ScenarioError as exc:
        return _fail(str(exc))
    write_artifacts(result, args.out)
    violations = check_invariants(result)
    if violations:
        for violation in violations:
            print(f"invariant: {violation}", file=sys.stderr)
        return EXIT_INVARIANT
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    try:
        data = _read_bytes(args.ledger, "ledger")
        snapshot = _load_snapshot(args.snapshot)
        chain = deserialize_chain(data)
    except (ScenarioError, ValueError) as exc:
        return _fail(str(exc))
    report = trace_history(args.batch_id, chain, snapshot.payloads)
    if not report.found:
        print(f"no transactions reference batch {args.batch_id!r}", file=sys.stderr)
        return EXIT_UNKNOWN_BATCH
    print(render_report(report, args.format))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        data = _read_bytes(args.ledger, "ledger")
        snapshot = _load_snapshot(args.snapshot)
        keys = _load_keys(args.keys)
    except ScenarioError as exc:
        return _fail(str(exc))

    mapping = keys.as_mapping()
    report = verify_ledger_bytes(data, mapping, snapshot.payloads)
    findings = 0
    for finding in report.findings:
        findings += 1
        print(f"block {finding.height}: {finding.category}: {finding.detail}")

    batches = 0
    try:
        chain = deserialize_chain(data)
    except ValueError:
        chain = None  # structural findings already reported above
    if chain is not None:
        seen: list[str] = []
        for _, _, tx in chain.transactions():
            if tx.batch_id not in seen:
                seen.append(tx.batch_id)
        batches = len(seen)
        for batch_id in seen:
            verdict = verify_authenticity(batch_id, chain, snapshot.payloads, mapping)
            for text in verdict.findings:
                findings += 1
                print(f"batch {batch_id}: {text}")

    if findings:
        return EXIT_FINDINGS
    print(f"OK: {report.blocks_checked} blocks, {batches} batches")
    return EXIT_OK


def cmd_inject(args: argparse.Namespace) -> int:
    try:
        data = _read_bytes(args.ledger, "ledger")
        raw = _read_bytes(args.fault, "fault spec")
        try:
            fault = FaultSpec.from_dict(json.loads(raw))
        except ValueError as exc:
            raise ScenarioError(f"fault spec: {exc}") from None
        mutated = apply_artifact_fault(data, fault)
    except (ScenarioError, InapplicableFault) as exc:
        return _fail(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "ledger.ndjson"
    target.write_bytes(mutated)
    print(f"wrote {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pharmachain",
        description="Deterministic medicine supply-chain ledger simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file and write artifacts")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_trace = sub.add_parser("trace", help="print the recorded history of one batch")
    p_trace.add_argument("batch_id", metavar="batch-id")
    p_trace.add_argument("--ledger", required=True)
    p_trace.add_argument("--snapshot", required=True)
    p_trace.add_argument("--format", choices=("json", "text"), default="text")
    p_trace.set_defaults(func=cmd_trace)

    p_verify = sub.add_parser("verify", help="check ledger integrity and batch authenticity")
    p_verify.add_argument("--ledger", required=True)
    p_verify.add_argument("--snapshot", required=True)
    p_verify.add_argument("--keys", required=True)
    p_verify.set_defaults(func=cmd_verify)

    p_inject = sub.add_parser("inject", help="apply an artifact fault to a ledger copy")
    p_inject.add_argument("--ledger", required=True)
    p_inject.add_argument("--fault", required=True, help="fault spec JSON file")
    p_inject.add_argument("--out", required=True, help="output directory")
    p_inject.set_defaults(func=cmd_inject)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
