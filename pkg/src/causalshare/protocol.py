"""Peer-to-peer replica state machine with edge-indexed timestamps."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Iterable, Mapping, Optional

from .topology import Edge, ShareGraph, Topology

UpdateId = tuple[int, int]
"""``(issuer, per-issuer sequence number)``, sequence numbers start at 1."""


class NotStored(KeyError):
    pass


class DummyAccess(PermissionError):
    pass


class Misrouted(ValueError):
    pass


@dataclass(frozen=True)
class EdgeTimestamp:
    """Non-negative counters indexed by a fixed, canonically ordered edge set."""

    index: tuple[Edge, ...]
    values: tuple[int, ...]

    @classmethod
    def zeros(cls, edges: Iterable[Edge]) -> "EdgeTimestamp":
        index = tuple(sorted(edges))
        return cls(index, (0,) * len(index))

    @classmethod
    def from_mapping(cls, counts: Mapping[Edge, int]) -> "EdgeTimestamp":
        index = tuple(sorted(counts))
        return cls(index, tuple(counts[e] for e in index))

    @cached_property
    def _pos(self) -> dict[Edge, int]:
        return {e: n for n, e in enumerate(self.index)}

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.index)

    def __getitem__(self, e: Edge) -> int:
        return self.values[self._pos[e]]

    def __contains__(self, e: object) -> bool:
        return e in self._pos

    def get(self, e: Edge, default: int = 0) -> int:
        n = self._pos.get(e)
        return default if n is None else self.values[n]

    def items(self):
        return zip(self.index, self.values)

    def replace(self, updates: Mapping[Edge, int]) -> "EdgeTimestamp":
        if not updates:
            return self
        vals = list(self.values)
        for e, v in updates.items():
            vals[self._pos[e]] = v
        return EdgeTimestamp(self.index, tuple(vals))

    def as_dict(self) -> dict[Edge, int]:
        return dict(zip(self.index, self.values))

    def to_json(self) -> list[list[int]]:
        return [[a, b, v] for (a, b), v in zip(self.index, self.values)]

    @classmethod
    def from_json(cls, rows: Iterable[Iterable[int]]) -> "EdgeTimestamp":
        return cls.from_mapping({(int(a), int(b)): int(v) for a, b, v in rows})

    def __repr__(self) -> str:
        body = ", ".join(f"{a}->{b}:{v}" for (a, b), v in self.items())
        return f"EdgeTimestamp({body})"


@dataclass(frozen=True)
class UpdateMessage:
    issuer: int
    seq: int
    timestamp: EdgeTimestamp
    register: str
    value: Any
    recipient: int
    metadata_only: bool = False

    @property
    def update_id(self) -> UpdateId:
        return (self.issuer, self.seq)

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.issuer, self.seq)


# --- the three algorithm functions ---------------------------------------------


def advance(i: int, tau: EdgeTimestamp, x: str, graph: ShareGraph) -> EdgeTimestamp:
    """Bump the counter of every outgoing edge ``e_ik`` whose far end also stores ``x``."""
    if x not in graph.registers(i):
        raise NotStored(x)
    return tau.replace({e: tau[e] + 1 for e in tau.index if e[0] == i and x in graph.shared(i, e[1])})


def predicate_j(i: int, tau: EdgeTimestamp, k: int, T: EdgeTimestamp) -> bool:
    """Delivery test for an update from ``k`` carrying ``T`` at replica ``i``.

    The update must be the next one from ``k``, and every other incoming edge
    tracked by both sides must already be caught up.  ``T.index`` is the
    sender's edge set.
    """
    if tau[(k, i)] != T[(k, i)] - 1:
        return False
    return all(tau[e] >= T[e] for e in tau.index if e[1] == i and e[0] != k and e in T)


def merge(tau: EdgeTimestamp, T: EdgeTimestamp) -> EdgeTimestamp:
    """Entrywise max over the edges both timestamps track; the rest stays."""
    return tau.replace({e: T[e] for e in tau.index if e in T and T[e] > tau[e]})


Predicate = Callable[[int, EdgeTimestamp, int, EdgeTimestamp], bool]
Merge = Callable[[EdgeTimestamp, EdgeTimestamp], EdgeTimestamp]


# Deliberately broken variants, used to show the checker is not vacuous.


def predicate_without_successor(i: int, tau: EdgeTimestamp, k: int, T: EdgeTimestamp) -> bool:
    return all(tau[e] >= T[e] for e in tau.index if e[1] == i and e[0] != k and e in T)


def predicate_without_incoming(i: int, tau: EdgeTimestamp, k: int, T: EdgeTimestamp) -> bool:
    return tau[(k, i)] == T[(k, i)] - 1


def merge_step_only(tau: EdgeTimestamp, T: EdgeTimestamp) -> EdgeTimestamp:
    """Advances each counter by at most one, losing transitively learned counts."""
    return tau.replace({e: tau[e] + 1 for e in tau.index if e in T and T[e] > tau[e]})


MUTANTS: dict[str, tuple[str, Callable[..., Any]]] = {
    "no-successor": ("predicate", predicate_without_successor),
    "no-incoming": ("predicate", predicate_without_incoming),
    "step-merge": ("merge", merge_step_only),
}
Emit = Callable[..., None]


def _no_emit(kind: str, **fields: Any) -> None:
    pass


@dataclass
class Replica:
    """A single replica: local copies, timestamp, pending buffer and apply log.

    ``emit`` receives ``(kind, **fields)`` for issue/send/deliver/buffer/apply.
    ``predicate`` and ``merge_fn`` are swappable so tests can run mutants.
    """

    id: int
    topology: Topology
    graph: ShareGraph
    edges: Iterable[Edge]
    default: Any = None
    emit: Emit = _no_emit
    predicate: Predicate = predicate_j
    merge_fn: Merge = merge
    tau: EdgeTimestamp = field(init=False)
    store: dict[str, Any] = field(init=False)
    pending: dict[tuple[int, int], UpdateMessage] = field(init=False, default_factory=dict)
    applied_log: list[UpdateId] = field(init=False, default_factory=list)
    seq: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        self.tau = EdgeTimestamp.zeros(self.edges)
        self.store = {x: self.default for x in sorted(self.topology.replica_registers[self.id])}

    @property
    def registers(self) -> frozenset[str]:
        return self.topology.replica_registers[self.id]

    def _check_access(self, x: str) -> None:
        if x not in self.store:
            raise NotStored(f"replica {self.id} does not store {x!r}")
        if self.topology.is_dummy(self.id, x):
            raise DummyAccess(f"replica {self.id} holds only a dummy copy of {x!r}")

    def handle_read(self, x: str) -> Any:
        self._check_access(x)
        return self.store[x]

    def handle_write(self, x: str, v: Any, client: Optional[int] = None) -> tuple[str, list[UpdateMessage]]:
        self._check_access(x)
        self.store[x] = v
        self.tau = advance(self.id, self.tau, x, self.graph)
        return "ack", self._issue(x, v, client)

    def _issue(self, x: str, v: Any, client: Optional[int]) -> list[UpdateMessage]:
        self.seq += 1
        uid = (self.id, self.seq)
        self.emit("issue", replica=self.id, update=uid, register=x, value=v, timestamp=self.tau, client=client)
        self.applied_log.append(uid)
        self.emit("apply", replica=self.id, update=uid, timestamp=self.tau)
        out = []
        for k in self.topology.holders(x):
            if k == self.id:
                continue
            dummy = self.topology.is_dummy(k, x)
            msg = UpdateMessage(self.id, self.seq, self.tau, x, None if dummy else v, k, dummy)
            self.emit("send", replica=self.id, peer=k, update=uid, metadata_only=dummy)
            out.append(msg)
        return out

    def ready(self, msg: UpdateMessage) -> bool:
        return self.predicate(self.id, self.tau, msg.issuer, msg.timestamp)

    def receive_update(self, msg: UpdateMessage) -> list[UpdateId]:
        """Buffer ``msg`` and apply everything that becomes deliverable."""
        if msg.recipient != self.id or msg.register not in self.registers:
            raise Misrouted(f"{msg.update_id} for {msg.register!r} sent to replica {self.id}")
        self.emit("deliver", replica=self.id, peer=msg.issuer, update=msg.update_id)
        self.pending[msg.sort_key] = msg
        applied = self.drain()
        if msg.sort_key in self.pending:
            self.emit("buffer", replica=self.id, update=msg.update_id)
        return applied

    def drain(self) -> list[UpdateId]:
        applied: list[UpdateId] = []
        fired = True
        while fired:
            fired = False
            for key in sorted(self.pending):
                msg = self.pending[key]
                if self.ready(msg):
                    self._apply(msg)
                    applied.append(msg.update_id)
                    fired = True
                    break
        return applied

    def _apply(self, msg: UpdateMessage) -> None:
        if not msg.metadata_only:
            self.store[msg.register] = msg.value
        self.tau = self.merge_fn(self.tau, msg.timestamp)
        del self.pending[msg.sort_key]
        self.applied_log.append(msg.update_id)
        self.emit("apply", replica=self.id, update=msg.update_id, timestamp=self.tau)
