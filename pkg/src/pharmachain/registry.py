"""The two off-chain stores: the medicine formulary and the payload store.

Blocks carry only digests; the payload store holds the full transaction
details keyed by content address. Temperatures are integer deci-degrees
Celsius (25.0 C == 250) so hashed content never contains floats.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

from .canonical import HashDigest, hash_payload


class DuplicateName(Exception):
    """A medicine with this name is already registered."""


class InvalidSpec(Exception):
    """A medicine spec violates an invariant; the message names the field."""


class SnapshotIntegrityError(Exception):
    """A snapshot entry's bytes no longer match its digest."""


@dataclass(frozen=True)
class MedicineSpec:
    """Formulary entry: canonical ingredient amounts, storage range, shelf life."""

    name: str
    ingredients: dict[str, int]  # ingredient name -> amount, integer milligrams
    storage_temp_min: int  # deci-degrees Celsius
    storage_temp_max: int
    shelf_life_days: int

    def validate(self) -> None:
        if not self.name:
            raise InvalidSpec("name: must be non-empty")
        if not self.ingredients:
            raise InvalidSpec("ingredients: at least one ingredient required")
        for ingredient, amount in self.ingredients.items():
            if amount <= 0:
                raise InvalidSpec(f"ingredients[{ingredient}]: amount must be positive")
        if self.storage_temp_min >= self.storage_temp_max:
            raise InvalidSpec("storage range: storage_temp_min must be below storage_temp_max")
        if self.shelf_life_days <= 0:
            raise InvalidSpec("shelf_life_days: must be positive")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ingredients": dict(sorted(self.ingredients.items())),
            "storage_temp_min": self.storage_temp_min,
            "storage_temp_max": self.storage_temp_max,
            "shelf_life_days": self.shelf_life_days,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MedicineSpec":
        spec = cls(
            name=doc["name"],
            ingredients={str(k): int(v) for k, v in doc["ingredients"].items()},
            storage_temp_min=int(doc["storage_temp_min"]),
            storage_temp_max=int(doc["storage_temp_max"]),
            shelf_life_days=int(doc["shelf_life_days"]),
        )
        spec.validate()
        return spec


class MedicineListStore:
    """Append-only formulary; names are case-sensitive exact-match keys."""

    def __init__(self) -> None:
        self._entries: dict[str, MedicineSpec] = {}

    def register(self, spec: MedicineSpec) -> None:
        spec.validate()
        if spec.name in self._entries:
            raise DuplicateName(spec.name)
        self._entries[spec.name] = spec

    def get(self, name: str) -> MedicineSpec | None:
        return self._entries.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return sorted(self._entries)


class PayloadStore:
    """Content-addressed byte store: digest -> payload, idempotent puts."""

    def __init__(self) -> None:
        self._entries: dict[HashDigest, bytes] = {}

    def put(self, payload: bytes) -> HashDigest:
        digest = hash_payload(payload)
        self._entries[digest] = payload
        return digest

    def get(self, digest: HashDigest) -> bytes | None:
        return self._entries.get(digest)

    def __contains__(self, digest: HashDigest) -> bool:
        return digest in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def digests(self) -> list[HashDigest]:
        return sorted(self._entries, key=lambda d: d.hex())

    def self_check(self) -> list[HashDigest]:
        """Re-hash every entry; returns the digests whose bytes no longer match."""
        return [d for d, payload in self._entries.items() if hash_payload(payload) != d]

    # Test hook: corrupt an entry out-of-band, bypassing content addressing.
    def _force_put(self, digest: HashDigest, payload: bytes) -> None:
        self._entries[digest] = payload


@dataclass
class Snapshot:
    """On-disk form of both stores: one JSON document."""

    medicines: MedicineListStore = field(default_factory=MedicineListStore)
    payloads: PayloadStore = field(default_factory=PayloadStore)


def save_snapshot(snapshot: Snapshot, path: str | Path) -> None:
    doc = {
        "medicines": [snapshot.medicines.get(name).to_dict() for name in snapshot.medicines.names()],
        "payloads": {
            digest.hex(): base64.b64encode(snapshot.payloads.get(digest)).decode("ascii")
            for digest in snapshot.payloads.digests()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_snapshot(path: str | Path) -> Snapshot:
    """Load a snapshot, refusing any payload whose digest does not match its bytes."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    snapshot = Snapshot()
    for spec_doc in doc.get("medicines", []):
        snapshot.medicines.register(MedicineSpec.from_dict(spec_doc))
    for hex_digest, encoded in doc.get("payloads", {}).items():
        payload = base64.b64decode(encoded, validate=True)
        stored = snapshot.payloads.put(payload)
        if stored != HashDigest.from_hex(hex_digest):
            raise SnapshotIntegrityError(f"payload under {hex_digest} does not hash to its key")
    return snapshot
