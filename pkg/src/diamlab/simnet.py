"""Deterministic discrete-event network: clock, links, taps, delivery.

The clock is an integer count of simulated microseconds. Events execute
in (timestamp, insertion order) order, so a given (topology, seed,
scripted inputs) triple always replays to the same schedule, the same
loss draws, and byte-identical tap streams. The single random source is
Python's Mersenne Twister (`random.Random`), seeded once per
simulation.

Links are point-to-point and bidirectional. A link with protected=True
models an encrypted or trusted transport: traffic still flows, but taps
on it capture nothing.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Optional

US_PER_MS = 1_000
US_PER_S = 1_000_000


class TopologyError(ValueError):
    """Bad topology description: duplicate label or dangling link endpoint."""


class NoSuchLinkError(ValueError):
    """send/attach_tap named a node pair with no link between them."""


@dataclass(frozen=True)
class NodeId:
    id: int
    label: str


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    latency_ms: float = 10.0
    loss_probability: float = 0.0
    protected: bool = False

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency must be >= 0")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must be in [0, 1]")

    @property
    def key(self) -> tuple[int, int]:
        return (self.a.id, self.b.id) if self.a.id <= self.b.id else (self.b.id, self.a.id)

    @property
    def latency_us(self) -> int:
        return int(round(self.latency_ms * US_PER_MS))


@dataclass(frozen=True)
class CaptureRecord:
    at: int  # microseconds
    src: NodeId
    dst: NodeId
    data: bytes


@dataclass
class Tap:
    """Passive capture stream attached to one link."""

    link_key: tuple[int, int]
    records: list[CaptureRecord] = field(default_factory=list)


@dataclass(frozen=True)
class SimEvent:
    at: int
    kind: str  # "deliver" | "timer"
    dst: NodeId
    src: Optional[NodeId] = None
    payload: Optional[bytes] = None
    tag: object = None


@dataclass
class LinkStats:
    attempted: int = 0
    delivered: int = 0
    lost: int = 0


@dataclass
class SimStats:
    events_processed: int = 0
    delivered: int = 0
    lost: int = 0
    sends: int = 0


@dataclass(frozen=True)
class NodeSpec:
    label: str


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    latency_ms: float = 10.0
    loss_probability: float = 0.0
    protected: bool = False


@dataclass(frozen=True)
class TopologySpec:
    nodes: tuple[NodeSpec, ...] = ()
    links: tuple[LinkSpec, ...] = ()


class Simulation:
    """Single-threaded event loop over a fixed topology."""

    def __init__(self, nodes: list[NodeId], links: list[Link], seed: int):
        self.nodes = list(nodes)
        self.node_by_label = {n.label: n for n in self.nodes}
        self.links: dict[tuple[int, int], Link] = {l.key: l for l in links}
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock: int = 0
        self.stats = SimStats()
        self.link_stats: dict[tuple[int, int], LinkStats] = {
            key: LinkStats() for key in self.links
        }
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self._handlers: dict[int, object] = {}
        self._taps: dict[tuple[int, int], list[Tap]] = {key: [] for key in self.links}

    # -- wiring ------------------------------------------------------------

    def register_handler(self, node: NodeId, handler: object) -> None:
        """handler must expose on_message(sim, src, data, now) and on_timer(sim, tag, now)."""
        self._handlers[node.id] = handler

    def link_between(self, a: NodeId, b: NodeId) -> Optional[Link]:
        key = (a.id, b.id) if a.id <= b.id else (b.id, a.id)
        return self.links.get(key)

    # -- scheduling ----------------------------------------------------------

    def _push(self, event: SimEvent) -> None:
        if event.at < self.clock:
            raise ValueError(f"cannot schedule into the past ({event.at} < {self.clock})")
        heapq.heappush(self._queue, (event.at, self._seq, event))
        self._seq += 1

    def schedule_timer(self, at: int, dst: NodeId, tag: object) -> None:
        self._push(SimEvent(at=at, kind="timer", dst=dst, tag=tag))

    def send(self, src: NodeId, dst: NodeId, data: bytes) -> None:
        """Offer bytes to the link; taps see every traversal, loss is drawn after."""
        link = self.link_between(src, dst)
        if link is None:
            raise NoSuchLinkError(f"no link between {src.label!r} and {dst.label!r}")
        self.stats.sends += 1
        lstats = self.link_stats[link.key]
        lstats.attempted += 1
        if not link.protected:
            record = CaptureRecord(at=self.clock, src=src, dst=dst, data=bytes(data))
            for tap in self._taps[link.key]:
                tap.records.append(record)
        if link.loss_probability > 0 and self.rng.random() < link.loss_probability:
            lstats.lost += 1
            self.stats.lost += 1
            return
        self._push(
            SimEvent(at=self.clock + link.latency_us, kind="deliver", dst=dst, src=src, payload=data)
        )

    def attach_tap(self, a: NodeId, b: NodeId) -> Tap:
        link = self.link_between(a, b)
        if link is None:
            raise NoSuchLinkError(f"no link between {a.label!r} and {b.label!r}")
        tap = Tap(link_key=link.key)
        self._taps[link.key].append(tap)
        return tap

    # -- execution -----------------------------------------------------------

    def next_event_at(self) -> Optional[int]:
        return self._queue[0][0] if self._queue else None

    def run_until(self, t: int) -> SimStats:
        """Process every event with timestamp <= t; the clock ends exactly at t."""
        if t < self.clock:
            raise ValueError(f"cannot run backwards ({t} < {self.clock})")
        while self._queue and self._queue[0][0] <= t:
            _, _, event = heapq.heappop(self._queue)
            self.clock = event.at
            self.stats.events_processed += 1
            handler = self._handlers.get(event.dst.id)
            if event.kind == "deliver":
                self.stats.delivered += 1
                if event.src is not None:
                    link = self.link_between(event.src, event.dst)
                    if link is not None:
                        self.link_stats[link.key].delivered += 1
                if handler is not None:
                    handler.on_message(self, event.src, event.payload, self.clock)
            else:
                if handler is not None:
                    handler.on_timer(self, event.tag, self.clock)
        self.clock = t
        return self.stats


def build_topology(spec: TopologySpec, seed: int = 0) -> Simulation:
    """Materialize a simulation at clock 0 from a declarative description."""
    nodes: list[NodeId] = []
    seen: set[str] = set()
    for i, ns in enumerate(spec.nodes):
        if ns.label in seen:
            raise TopologyError(f"duplicate node label {ns.label!r}")
        seen.add(ns.label)
        nodes.append(NodeId(id=i, label=ns.label))
    by_label = {n.label: n for n in nodes}
    links: list[Link] = []
    for ls in spec.links:
        if ls.a not in by_label or ls.b not in by_label:
            missing = ls.a if ls.a not in by_label else ls.b
            raise TopologyError(f"link endpoint {missing!r} is not a declared node")
        links.append(
            Link(
                a=by_label[ls.a],
                b=by_label[ls.b],
                latency_ms=ls.latency_ms,
                loss_probability=ls.loss_probability,
                protected=ls.protected,
            )
        )
    return Simulation(nodes=nodes, links=links, seed=seed)
