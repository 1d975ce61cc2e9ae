"""Register placement, share graphs and the topology config loader."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from json import scanner as _json_scanner
from json.decoder import JSONObject
from pathlib import Path
from typing import Any, Iterable, Mapping

Edge = tuple[int, int]
"""A directed edge ``(from, to)`` between two replicas."""


class InvalidTopology(ValueError):
    pass


class DummyConflict(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Which replica stores which registers, and which replicas each client may use.

    ``replica_registers`` maps replica index (1..R) to its register set, dummy
    copies included. ``client_replicas`` is empty in peer-to-peer mode.
    """

    replica_registers: Mapping[int, frozenset[str]]
    client_replicas: Mapping[int, frozenset[int]] = field(default_factory=dict)
    dummy_marks: frozenset[tuple[int, str]] = frozenset()

    def __post_init__(self) -> None:
        regs = {int(r): frozenset(xs) for r, xs in self.replica_registers.items()}
        clients = {int(c): frozenset(int(r) for r in rs) for c, rs in self.client_replicas.items()}
        object.__setattr__(self, "replica_registers", dict(sorted(regs.items())))
        object.__setattr__(self, "client_replicas", dict(sorted(clients.items())))
        object.__setattr__(self, "dummy_marks", frozenset((int(r), x) for r, x in self.dummy_marks))
        self.validate()

    def validate(self) -> None:
        ids = list(self.replica_registers)
        if not ids:
            raise InvalidTopology("topology has no replicas")
        if ids != list(range(1, len(ids) + 1)):
            raise InvalidTopology(f"replica ids must be exactly 1..{len(ids)}, got {ids}")
        for r, xs in self.replica_registers.items():
            for x in xs:
                if not isinstance(x, str) or not x:
                    raise InvalidTopology(f"replica {r}: register names must be non-empty strings, got {x!r}")
        for c, rs in self.client_replicas.items():
            if c < 1:
                raise InvalidTopology(f"client ids must be positive, got {c}")
            if not rs:
                raise InvalidTopology(f"client {c} has an empty replica set")
            unknown = sorted(r for r in rs if r not in self.replica_registers)
            if unknown:
                raise InvalidTopology(f"client {c} references unknown replicas {unknown}")
        for r, x in self.dummy_marks:
            if x not in self.replica_registers.get(r, ()):
                raise InvalidTopology(f"dummy mark ({r}, {x!r}) is not a stored copy")
        for x in self.registers:
            if all(r_x in self.dummy_marks for r_x in ((r, x) for r in self.holders(x))):
                raise InvalidTopology(f"register {x!r} has no real (non-dummy) copy")

    @property
    def replicas(self) -> tuple[int, ...]:
        return tuple(self.replica_registers)

    @property
    def clients(self) -> tuple[int, ...]:
        return tuple(self.client_replicas)

    @cached_property
    def registers(self) -> tuple[str, ...]:
        return tuple(sorted(set().union(*self.replica_registers.values())))

    def holders(self, x: str) -> tuple[int, ...]:
        """C(x): every replica holding a copy of ``x`` (dummies included)."""
        return tuple(r for r, xs in self.replica_registers.items() if x in xs)

    def is_dummy(self, replica: int, x: str) -> bool:
        return (replica, x) in self.dummy_marks

    def real_registers(self, replica: int) -> frozenset[str]:
        return frozenset(x for x in self.replica_registers[replica] if (replica, x) not in self.dummy_marks)

    def client_registers(self, client: int) -> frozenset[str]:
        """Registers a client may operate on (dummy copies excluded)."""
        out: set[str] = set()
        for r in self.client_replicas[client]:
            out |= self.real_registers(r)
        return frozenset(out)

    def to_dict(self) -> dict[str, Any]:
        return {
            "replicas": [{"id": r, "registers": sorted(xs)} for r, xs in self.replica_registers.items()],
            "clients": [{"id": c, "replicas": sorted(rs)} for c, rs in self.client_replicas.items()],
            "dummies": [[r, x] for r, x in sorted(self.dummy_marks)],
        }


@dataclass(frozen=True)
class ShareGraph:
    vertices: tuple[int, ...]
    edges: tuple[Edge, ...]
    edge_registers: Mapping[Edge, frozenset[str]]
    replica_registers: Mapping[int, frozenset[str]]

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    @cached_property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {v: [] for v in self.vertices}
        for a, b in self.edges:
            adj[a].append(b)
        return {v: tuple(sorted(ns)) for v, ns in adj.items()}

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def registers(self, i: int) -> frozenset[str]:
        return self.replica_registers[i]

    def shared(self, i: int, j: int) -> frozenset[str]:
        """X_ij, empty when i and j share nothing (or i == j is not an edge)."""
        return self.edge_registers.get((i, j), frozenset())

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edge_set

    def holders(self, x: str) -> tuple[int, ...]:
        return tuple(r for r in self.vertices if x in self.replica_registers[r])

    def incident(self, i: int) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if i in e)


@dataclass(frozen=True)
class AugmentedShareGraph:
    """Share graph plus edges between replicas that some client reaches together."""

    base: ShareGraph
    extra_edges: tuple[Edge, ...]
    all_edges: tuple[Edge, ...]
    client_replicas: Mapping[int, frozenset[int]]

    @property
    def vertices(self) -> tuple[int, ...]:
        return self.base.vertices

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.all_edges)

    @cached_property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {v: [] for v in self.base.vertices}
        for a, b in self.all_edges:
            adj[a].append(b)
        return {v: tuple(sorted(ns)) for v, ns in adj.items()}

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def shared(self, i: int, j: int) -> frozenset[str]:
        return self.base.shared(i, j)

    def registers(self, i: int) -> frozenset[str]:
        return self.base.registers(i)

    def co_assigned(self, j: int, k: int) -> bool:
        return any(j in rs and k in rs for rs in self.client_replicas.values())


def build_share_graph(topology: Topology) -> ShareGraph:
    regs = topology.replica_registers
    vertices = tuple(regs)
    edge_registers: dict[Edge, frozenset[str]] = {}
    for i in vertices:
        for j in vertices:
            if i != j:
                common = regs[i] & regs[j]
                if common:
                    edge_registers[(i, j)] = common
    edges = tuple(sorted(edge_registers))
    return ShareGraph(vertices, edges, edge_registers, dict(regs))


def build_augmented_share_graph(topology: Topology) -> AugmentedShareGraph:
    base = build_share_graph(topology)
    extra: set[Edge] = set()
    for c, rs in topology.client_replicas.items():
        for j in rs:
            if j not in topology.replica_registers:
                raise InvalidTopology(f"client {c} references unknown replica {j}")
            for k in rs:
                if j != k and (j, k) not in base.edge_set:
                    extra.add((j, k))
    all_edges = tuple(sorted(base.edge_set | extra))
    return AugmentedShareGraph(base, tuple(sorted(extra)), all_edges, dict(topology.client_replicas))


def apply_dummies(topology: Topology, dummies: Iterable[tuple[int, str]]) -> Topology:
    """Return a topology with metadata-only copies added at the given replicas."""
    dummies = sorted({(int(r), x) for r, x in dummies})
    if not dummies:
        return topology
    regs = {r: set(xs) for r, xs in topology.replica_registers.items()}
    known = set(topology.registers)
    for r, x in dummies:
        if r not in regs:
            raise InvalidTopology(f"dummy targets unknown replica {r}")
        if x not in known:
            raise InvalidTopology(f"dummy register {x!r} is not stored anywhere")
        if x in regs[r] and (r, x) not in topology.dummy_marks:
            raise DummyConflict(f"replica {r} already stores a real copy of {x!r}")
        regs[r].add(x)
    return Topology(
        {r: frozenset(xs) for r, xs in regs.items()},
        topology.client_replicas,
        topology.dummy_marks | frozenset(dummies),
    )


# --- JSON config -----------------------------------------------------------


class _LineDict(dict):
    line = 0


class _LineDecoder(json.JSONDecoder):
    """JSON decoder whose objects remember the line they start on."""

    def __init__(self) -> None:
        super().__init__()

        def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
            s, end = s_and_end
            obj, new_end = JSONObject(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo)
            out = _LineDict(obj)
            out.line = s.count("\n", 0, end) + 1
            return out, new_end

        self.parse_object = parse_object
        self.scan_once = _json_scanner.py_make_scanner(self)


def _where(obj: Any) -> str:
    line = getattr(obj, "line", 0)
    return f"line {line}: " if line else ""


def parse_topology(text: str) -> Topology:
    """Parse a topology JSON document, reporting the offending line on errors."""
    try:
        doc = _LineDecoder().decode(text)
    except json.JSONDecodeError as exc:
        raise InvalidTopology(f"line {exc.lineno}: {exc.msg}") from None
    return topology_from_dict(doc)


def topology_from_dict(doc: Mapping[str, Any]) -> Topology:
    if not isinstance(doc, Mapping) or "replicas" not in doc:
        raise InvalidTopology(f"{_where(doc)}expected an object with a 'replicas' list")
    regs: dict[int, frozenset[str]] = {}
    for entry in doc["replicas"]:
        if not isinstance(entry, Mapping) or "id" not in entry:
            raise InvalidTopology(f"{_where(entry)}replica entry needs an 'id'")
        rid = entry["id"]
        if not isinstance(rid, int) or isinstance(rid, bool) or rid < 1:
            raise InvalidTopology(f"{_where(entry)}replica id must be a positive integer, got {rid!r}")
        if rid in regs:
            raise InvalidTopology(f"{_where(entry)}duplicate replica id {rid}")
        names = list(entry.get("registers", []))
        if len(set(names)) != len(names):
            raise InvalidTopology(f"{_where(entry)}replica {rid} lists a register twice")
        for x in names:
            if not isinstance(x, str) or not x:
                raise InvalidTopology(f"{_where(entry)}register names must be non-empty strings, got {x!r}")
        regs[rid] = frozenset(names)
    if sorted(regs) != list(range(1, len(regs) + 1)):
        raise InvalidTopology(f"{_where(doc)}replica ids must be exactly 1..{len(regs)}, got {sorted(regs)}")

    clients: dict[int, frozenset[int]] = {}
    for entry in doc.get("clients", []):
        if not isinstance(entry, Mapping) or "id" not in entry:
            raise InvalidTopology(f"{_where(entry)}client entry needs an 'id'")
        cid = entry["id"]
        if not isinstance(cid, int) or isinstance(cid, bool) or cid < 1:
            raise InvalidTopology(f"{_where(entry)}client id must be a positive integer, got {cid!r}")
        if cid in clients:
            raise InvalidTopology(f"{_where(entry)}duplicate client id {cid}")
        rs = list(entry.get("replicas", []))
        if not rs:
            raise InvalidTopology(f"{_where(entry)}client {cid} has an empty replica set")
        if len(set(rs)) != len(rs):
            raise InvalidTopology(f"{_where(entry)}client {cid} lists a replica twice")
        unknown = [r for r in rs if r not in regs]
        if unknown:
            raise InvalidTopology(f"{_where(entry)}client {cid} references unknown replicas {unknown}")
        clients[cid] = frozenset(rs)

    dummies = doc.get("dummies", [])
    seen: set[tuple[int, str]] = set()
    for pair in dummies:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise InvalidTopology(f"{_where(doc)}dummy entries must be [replica, register] pairs, got {pair!r}")
        key = (pair[0], pair[1])
        if key in seen:
            raise InvalidTopology(f"{_where(doc)}duplicate dummy {list(key)}")
        seen.add(key)
    # a dummy copy may or may not also be listed among the replica's registers
    listed = set().union(*regs.values()) if regs else set()
    for r, x in sorted(seen, key=repr):
        if r not in regs:
            raise InvalidTopology(f"{_where(doc)}dummy targets unknown replica {r!r}")
        if x not in listed:
            raise InvalidTopology(f"{_where(doc)}dummy register {x!r} is not stored anywhere")
        regs[r] = regs[r] | {x}
    try:
        return Topology(regs, clients, frozenset(seen))
    except InvalidTopology as exc:
        raise InvalidTopology(f"{_where(doc)}{exc}") from None


def load_topology(path: str | Path) -> Topology:
    return parse_topology(Path(path).read_text())
