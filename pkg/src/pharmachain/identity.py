"""Role and node identity shared by every other module."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass


class Role(enum.Enum):
    """The six participants of the supply chain."""

    PRODUCER = "producer"
    MINER = "miner"
    SUPPLIER = "supplier"
    DISTRIBUTOR = "distributor"
    PHARMACIST = "pharmacist"
    CUSTOMER = "customer"


_NODE_ID_RE = re.compile(r"^([a-z]+)-(0|[1-9][0-9]*)$")


@dataclass(frozen=True)
class NodeId:
    """A participant node, rendered as ``"role-index"`` (e.g. ``"pharmacist-2"``)."""

    role: Role
    index: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"node index must be non-negative, got {self.index}")

    def __str__(self) -> str:
        return f"{self.role.value}-{self.index}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        m = _NODE_ID_RE.match(text)
        if not m:
            raise ValueError(f"malformed node id: {text!r}")
        try:
            role = Role(m.group(1))
        except ValueError:
            raise ValueError(f"unknown role in node id: {text!r}") from None
        return cls(role=role, index=int(m.group(2)))


def node(role: Role, index: int = 0) -> NodeId:
    """Shorthand constructor used heavily in tests and demos."""
    return NodeId(role=role, index=index)
