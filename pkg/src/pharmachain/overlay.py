"""Deterministic discrete-event simulation of the peer-to-peer overlay.

Every live node is connected to every other (full mesh). Sends schedule a
delivery one link latency ahead; a seeded generator decides drops at
scheduling time, so a (seed, scenario) pair replays to the identical
delivery log. Ties in delivery time resolve by insertion order.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable

from .canonical import canonical_json
from .crypto import PublicKey, SignedEnvelope
from .identity import NodeId


class OverlayError(Exception):
    pass


class DuplicateNode(OverlayError):
    pass


class UnknownNode(OverlayError):
    pass


class UnknownSender(OverlayError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int
    link_latency: int = 1  # seconds per hop
    drop_rate: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.drop_rate <= 1:
            raise ValueError("drop_rate must be within [0, 1]")
        if self.link_latency < 0:
            raise ValueError("link_latency must be non-negative")


@dataclass(frozen=True)
class SimEvent:
    deliver_at: int
    sender: NodeId
    receiver: NodeId
    envelope: SignedEnvelope


Handler = Callable[["OverlayNetwork", NodeId, SignedEnvelope], None]


@dataclass
class OverlayNetwork:
    config: SimConfig
    now: int = 0
    nodes: dict[NodeId, PublicKey] = field(default_factory=dict)
    delivery_log: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._rng = random.Random(self.config.seed)
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self._handlers: dict[NodeId, Handler] = {}
        self._seen: dict[NodeId, set[bytes]] = {}

    @property
    def live_nodes(self) -> tuple[NodeId, ...]:
        return tuple(sorted(self.nodes, key=str))

    def join(self, node: NodeId, public_key: PublicKey) -> None:
        if node in self.nodes:
            raise DuplicateNode(f"{node} already joined")
        self.nodes[node] = public_key
        self._seen[node] = set()

    def leave(self, node: NodeId) -> None:
        if node not in self.nodes:
            raise UnknownNode(f"{node} is not in the overlay")
        del self.nodes[node]
        del self._seen[node]
        self._handlers.pop(node, None)
        # In-flight events to the departed node die with it.
        self._queue = [
            (at, seq, ev) for at, seq, ev in self._queue if ev.receiver != node
        ]
        heapq.heapify(self._queue)

    def set_handler(self, node: NodeId, handler: Handler) -> None:
        if node not in self.nodes:
            raise UnknownNode(f"{node} is not in the overlay")
        self._handlers[node] = handler

    def _schedule(self, sender: NodeId, receiver: NodeId, envelope: SignedEnvelope) -> None:
        if self._rng.random() < self.config.drop_rate:
            return
        event = SimEvent(
            deliver_at=self.now + self.config.link_latency,
            sender=sender,
            receiver=receiver,
            envelope=envelope,
        )
        heapq.heappush(self._queue, (event.deliver_at, self._seq, event))
        self._seq += 1

    def broadcast(self, sender: NodeId, envelope: SignedEnvelope) -> None:
        if sender not in self.nodes:
            raise UnknownSender(f"{sender} is not in the overlay")
        for peer in self.live_nodes:
            if peer != sender:
                self._schedule(sender, peer, envelope)

    def send(self, sender: NodeId, receiver: NodeId, envelope: SignedEnvelope) -> None:
        if sender not in self.nodes:
            raise UnknownSender(f"{sender} is not in the overlay")
        if receiver not in self.nodes:
            raise UnknownNode(f"{receiver} is not in the overlay")
        self._schedule(sender, receiver, envelope)

    def run_until_quiescent(self) -> list[dict]:
        """Deliver everything in (time, insertion) order; returns the full log.

        Each arrival at a live node is logged; the node's handler runs only
        the first time it sees a payload digest, which bounds gossip storms.
        """
        while self._queue:
            deliver_at, _, event = heapq.heappop(self._queue)
            self.now = max(self.now, deliver_at)
            receiver = event.receiver
            if receiver not in self.nodes:
                continue
            self.delivery_log.append(
                {
                    "t": deliver_at,
                    "from": str(event.sender),
                    "to": str(receiver),
                    "digest": event.envelope.payload_digest.hex(),
                    "kind": event.envelope.kind,
                }
            )
            digest = event.envelope.payload_digest.value
            if digest in self._seen[receiver]:
                continue
            self._seen[receiver].add(digest)
            handler = self._handlers.get(receiver)
            if handler is not None:
                handler(self, receiver, event.envelope)
        return self.delivery_log


def export_delivery_log(log: list[dict]) -> bytes:
    return b"".join(canonical_json(entry) + b"\n" for entry in log)
