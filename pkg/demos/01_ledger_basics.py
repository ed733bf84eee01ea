"""Build a small chain by hand, then watch tamper detection work.

Run from the repository root:

    python3 demos/01_ledger_basics.py
"""

from pharmachain.canonical import canonical_json
from pharmachain.crypto import derive_keypair
from pharmachain.identity import NodeId, Role
from pharmachain.ledger import (
    TxKind,
    append_block,
    build_block,
    make_genesis,
    new_chain,
    new_transaction,
    serialize_chain,
    verify_chain,
    verify_ledger_bytes,
)
from pharmachain.registry import PayloadStore

miner = derive_keypair(2024, NodeId(Role.MINER, 0))
producer = derive_keypair(2024, NodeId(Role.PRODUCER, 0))
keys = {kp.owner: kp.public for kp in (miner, producer)}
payloads = PayloadStore()

chain = new_chain(make_genesis(miner))
print(f"genesis: height={chain.head.header.height} "
      f"digest={chain.head.header.digest().hex()[:16]}...")

for t in (100, 200, 300):
    tx = new_transaction(
        producer, TxKind.PRODUCE, f"B-{t}",
        canonical_json({"batch_id": f"B-{t}", "timestamp": t}), t, payloads,
    )
    chain = append_block(chain, build_block(chain.head.header, [tx], miner, t))
    print(f"appended block {chain.height} at t={t}")

report = verify_chain(chain, keys, payloads)
print(f"\nverify clean chain: valid={report.valid} "
      f"({report.blocks_checked} blocks, {report.txs_checked} txs)")

# Flip a single bit in the serialized ledger and verify again.
data = bytearray(serialize_chain(chain))
victim = len(data) // 2
data[victim] ^= 0x01
line = bytes(data[:victim]).count(b"\n")
report = verify_ledger_bytes(bytes(data), keys, payloads)
print(f"\nflipped one bit in line {line}:")
for finding in report.findings[:3]:
    print(f"  block {finding.height}: {finding.category}: {finding.detail}")
print(f"detected={not report.valid}, blamed block {report.findings[0].height} "
      f"(the flip landed in block {line})")
