import hashlib

import pytest

from pharmachain.crypto import KeyPair, generate_keypair
from pharmachain.identity import NodeId, Role
from pharmachain.ledger import (
    Chain,
    TxKind,
    append_block,
    build_block,
    make_genesis,
    new_chain,
    new_transaction,
)
from pharmachain.registry import MedicineListStore, MedicineSpec, PayloadStore


def keypair_for(name: str, role: Role = Role.PRODUCER, index: int = 0) -> KeyPair:
    return generate_keypair(hashlib.sha256(name.encode()).digest(), NodeId(role, index))


@pytest.fixture
def producer_key() -> KeyPair:
    return keypair_for("producer", Role.PRODUCER)


@pytest.fixture
def miner_key() -> KeyPair:
    return keypair_for("miner", Role.MINER)


@pytest.fixture
def amoxicillin() -> MedicineSpec:
    return MedicineSpec(
        name="Amoxicillin",
        ingredients={"amoxicillin_trihydrate": 500},
        storage_temp_min=20,
        storage_temp_max=250,
        shelf_life_days=730,
    )


@pytest.fixture
def formulary(amoxicillin: MedicineSpec) -> MedicineListStore:
    store = MedicineListStore()
    store.register(amoxicillin)
    return store


def small_chain(miner: KeyPair, producer: KeyPair, payloads: PayloadStore, blocks: int = 2) -> Chain:
    """Genesis plus ``blocks`` single-transaction blocks."""
    chain = new_chain(make_genesis(miner))
    for i in range(blocks):
        tx = new_transaction(
            producer,
            TxKind.PRODUCE,
            batch_id=f"batch-{i}",
            payload=f'{{"batch":"batch-{i}"}}'.encode(),
            timestamp=10 * (i + 1),
            payloads=payloads,
        )
        chain = append_block(chain, build_block(chain.head.header, [tx], miner, timestamp=10 * (i + 1)))
    return chain
