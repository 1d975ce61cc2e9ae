"""Loop detection, per-replica timestamp graphs and the hoop-based comparison rules.

A loop through replica ``i`` is written ``(i, l_1, ..., l_s, r_1, ..., r_t, i)``;
it certifies the directed edge ``r_1 -> l_s`` (called ``e_jk`` with
``j = r_1`` and ``k = l_s``).  Such a loop makes ``i`` responsible for counting
``j``'s updates towards ``k`` when updates on ``e_jk`` can causally reach ``i``
along the ``r`` side without touching the ``l`` side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal, Union

from .topology import AugmentedShareGraph, Edge, ShareGraph


class NotASimpleLoop(ValueError):
    pass


class UnknownReplica(KeyError):
    pass


class UnknownRegister(KeyError):
    pass


AnyGraph = Union[ShareGraph, AugmentedShareGraph]


@dataclass(frozen=True)
class SimpleLoop:
    pivot: int
    l_path: tuple[int, ...]
    r_path: tuple[int, ...]

    @property
    def vertices(self) -> tuple[int, ...]:
        return (self.pivot, *self.l_path, *self.r_path)

    @property
    def edge(self) -> Edge:
        """The edge this loop can certify: from ``r_1`` to ``l_s``."""
        return (self.r_path[0], self.l_path[-1])

    def to_list(self) -> list[int]:
        return [*self.vertices, self.pivot]


@dataclass(frozen=True)
class TimestampGraph:
    owner: int
    edges: tuple[Edge, ...]
    witnesses: dict[Edge, SimpleLoop] = field(default_factory=dict, compare=False, hash=False)

    @property
    def vertices(self) -> tuple[int, ...]:
        return tuple(sorted({v for e in self.edges for v in e}))

    @property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def __contains__(self, e: object) -> bool:
        return e in self.edge_set

    def __len__(self) -> int:
        return len(self.edges)


# --- loop enumeration --------------------------------------------------------


def simple_cycles_through(graph: AnyGraph, i: int, max_length: int | None = None) -> Iterator[tuple[int, ...]]:
    """Yield every simple cycle through ``i`` as ``(i, v_1, ..., v_n)`` with ``n >= 2``.

    Both traversal directions are produced. ``max_length`` caps the number of
    vertices in the cycle.
    """
    limit = len(graph.vertices) if max_length is None else max_length
    path = [i]
    on_path = {i}

    def extend(v: int) -> Iterator[tuple[int, ...]]:
        for w in graph.neighbors(v):
            if w == i and len(path) >= 3:
                yield tuple(path)
            elif w not in on_path and len(path) < limit:
                path.append(w)
                on_path.add(w)
                yield from extend(w)
                path.pop()
                on_path.discard(w)

    yield from extend(i)


def loop_splits(cycle: tuple[int, ...]) -> Iterator[SimpleLoop]:
    """All ways of reading ``cycle`` as ``(i, l_1..l_s, r_1..r_t)`` with s, t >= 1."""
    i, rest = cycle[0], cycle[1:]
    for s in range(1, len(rest)):
        yield SimpleLoop(i, rest[:s], rest[s:])


def _check_shape(graph: AnyGraph, loop: SimpleLoop, edge: Edge) -> None:
    verts = loop.vertices
    if not loop.l_path or not loop.r_path:
        raise NotASimpleLoop("loop needs s >= 1 and t >= 1")
    if len(set(verts)) != len(verts):
        raise NotASimpleLoop(f"vertices repeat in {verts}")
    for v in verts:
        if v not in graph.adjacency:
            raise NotASimpleLoop(f"unknown replica {v}")
    closed = (*verts, loop.pivot)
    for a, b in zip(closed, closed[1:]):
        if b not in graph.neighbors(a):
            raise NotASimpleLoop(f"replicas {a} and {b} are not adjacent")
    if edge != loop.edge:
        raise NotASimpleLoop(f"loop certifies {loop.edge}, not {edge}")


def _loop_conditions(graph: AnyGraph, loop: SimpleLoop, hop_ok) -> bool:
    l_path, r_path = loop.l_path, loop.r_path
    j, k = loop.edge
    s = len(l_path)
    near: frozenset[str] = frozenset().union(*(graph.registers(v) for v in l_path[: s - 1]))
    far = near | graph.registers(l_path[-1])
    rr = (*r_path, loop.pivot)
    # (i): some register on e_jk avoids l_1..l_{s-1}
    if not graph.shared(j, k) - near:
        return False
    # (ii): the first hop out of j avoids l_1..l_{s-1}
    if not hop_ok(j, rr[1], near):
        return False
    # (iii): every later hop r_q -> r_{q+1} avoids all of l_1..l_s
    for q in range(1, len(r_path)):
        if not hop_ok(rr[q], rr[q + 1], far):
            return False
    return True


def is_loop(graph: ShareGraph, candidate: SimpleLoop, edge: Edge) -> bool:
    """Whether ``candidate`` is an ``(i, e_jk)``-loop for ``edge = (j, k)``."""
    _check_shape(graph, candidate, edge)
    j, k = edge
    if not graph.has_edge(j, k) or candidate.pivot in (j, k):
        return False
    return _loop_conditions(graph, candidate, lambda a, b, avoid: bool(graph.shared(a, b) - avoid))


def augmented_is_loop(ag: AugmentedShareGraph, candidate: SimpleLoop, edge: Edge) -> bool:
    """Loop test over the augmented graph: hops after the first may ride a shared client."""
    _check_shape(ag, candidate, edge)
    j, k = edge
    if edge not in ag.edge_set or candidate.pivot in (j, k):
        return False

    def hop_ok(a: int, b: int, avoid: frozenset[str]) -> bool:
        return bool(ag.shared(a, b) - avoid) or ag.co_assigned(a, b)

    return _loop_conditions(ag, candidate, hop_ok)


def _timestamp_edges(graph: AnyGraph, i: int, test, max_length: int | None) -> tuple[set[Edge], dict[Edge, SimpleLoop]]:
    if i not in graph.adjacency:
        raise UnknownReplica(i)
    edges = {e for e in _edges_of(graph) if i in e}
    witnesses: dict[Edge, SimpleLoop] = {}
    for cycle in simple_cycles_through(graph, i, max_length):
        for loop in loop_splits(cycle):
            e = loop.edge
            if e in edges:
                continue
            if test(loop):
                edges.add(e)
                witnesses[e] = loop
    return edges, witnesses


def _edges_of(graph: AnyGraph) -> tuple[Edge, ...]:
    return graph.all_edges if isinstance(graph, AugmentedShareGraph) else graph.edges


def timestamp_graph(graph: ShareGraph, i: int, max_length: int | None = None) -> TimestampGraph:
    """E_i: edges incident at ``i`` plus every edge certified by some loop through ``i``.

    ``max_length`` bounds the cycles searched; a bound may drop required edges.
    """

    def test(loop: SimpleLoop) -> bool:
        j, k = loop.edge
        return graph.has_edge(j, k) and _loop_conditions(
            graph, loop, lambda a, b, avoid: bool(graph.shared(a, b) - avoid)
        )

    edges, witnesses = _timestamp_edges(graph, i, test, max_length)
    return TimestampGraph(i, tuple(sorted(edges)), witnesses)


def augmented_timestamp_graph(ag: AugmentedShareGraph, i: int, max_length: int | None = None) -> TimestampGraph:
    """Augmented timestamp graph, restricted to edges of the plain share graph."""

    def hop_ok(a: int, b: int, avoid: frozenset[str]) -> bool:
        return bool(ag.shared(a, b) - avoid) or ag.co_assigned(a, b)

    def test(loop: SimpleLoop) -> bool:
        return _loop_conditions(ag, loop, hop_ok)

    edges, witnesses = _timestamp_edges(ag, i, test, max_length)
    kept = ag.base.edge_set
    return TimestampGraph(
        i,
        tuple(sorted(e for e in edges if e in kept)),
        {e: w for e, w in witnesses.items() if e in kept},
    )


def all_timestamp_graphs(graph: ShareGraph, max_length: int | None = None) -> dict[int, TimestampGraph]:
    return {i: timestamp_graph(graph, i, max_length) for i in graph.vertices}


def all_augmented_timestamp_graphs(ag: AugmentedShareGraph) -> dict[int, TimestampGraph]:
    return {i: augmented_timestamp_graph(ag, i) for i in ag.vertices}


# --- hoops ----------------------------------------------------------------------


@dataclass(frozen=True)
class Hoop:
    register: str
    path: tuple[int, ...]
    edge_labels: tuple[str, ...]

    @property
    def ends(self) -> tuple[int, int]:
        return self.path[0], self.path[-1]

    @property
    def interior(self) -> tuple[int, ...]:
        return self.path[1:-1]


def _hop_choices(graph: ShareGraph, path: tuple[int, ...], x: str) -> list[list[str]]:
    return [sorted(graph.shared(a, b) - {x}) for a, b in zip(path, path[1:])]


def _distinct_labels(choices: list[list[str]]) -> tuple[str, ...] | None:
    """A system of distinct representatives, one label per hop, or None."""
    order = sorted(range(len(choices)), key=lambda h: len(choices[h]))
    picked: dict[int, str] = {}
    used: set[str] = set()

    def assign(n: int) -> bool:
        if n == len(order):
            return True
        h = order[n]
        for lab in choices[h]:
            if lab not in used:
                used.add(lab)
                picked[h] = lab
                if assign(n + 1):
                    return True
                used.discard(lab)
        return False

    if not assign(0):
        return None
    return tuple(picked[h] for h in range(len(choices)))


def find_hoops(graph: ShareGraph, x: str, max_length: int | None = None) -> list[Hoop]:
    """Every x-hoop with at least one interior replica, as paths between holders of ``x``.

    Each path is reported once, oriented from the lower-numbered end.
    """
    holders = set(graph.holders(x))
    if not holders:
        raise UnknownRegister(x)
    limit = len(graph.vertices) if max_length is None else max_length
    hoops: list[Hoop] = []
    for a in sorted(holders):
        stack = [(a,)]
        while stack:
            path = stack.pop()
            v = path[-1]
            for w in reversed(graph.neighbors(v)):
                if w in path or not (graph.shared(v, w) - {x}):
                    continue
                if w in holders:
                    if len(path) >= 2 and w > a:
                        full = (*path, w)
                        choices = _hop_choices(graph, full, x)
                        labels = _distinct_labels(choices) or tuple(c[0] for c in choices)
                        hoops.append(Hoop(x, full, labels))
                elif len(path) + 1 < limit:
                    stack.append((*path, w))
    hoops.sort(key=lambda h: (len(h.path), h.path))
    return hoops


def is_minimal_hoop(graph: ShareGraph, hoop: Hoop, variant: Literal["original", "modified"] = "original") -> bool:
    """Whether the hoop admits distinct per-hop labels meeting the variant's side condition.

    ``original``: no label is shared by both ends.  ``modified``: no label is
    stored by more than two replicas of the hoop.
    """
    x = hoop.register
    ra, rb = hoop.ends
    choices = _hop_choices(graph, hoop.path, x)
    if variant == "original":
        banned = graph.registers(ra) & graph.registers(rb)
        choices = [[lab for lab in c if lab not in banned] for c in choices]
    elif variant == "modified":
        members = hoop.path
        choices = [
            [lab for lab in c if sum(lab in graph.registers(v) for v in members) <= 2] for c in choices
        ]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return _distinct_labels(choices) is not None


@dataclass
class ComparisonRow:
    replica: int
    edge: Edge
    timestamp_graph: bool
    original_hoop: bool
    modified_hoop: bool

    @property
    def disagreement(self) -> bool:
        return len({self.timestamp_graph, self.original_hoop, self.modified_hoop}) > 1

    def to_dict(self) -> dict:
        return {
            "replica": self.replica,
            "edge": list(self.edge),
            "timestamp_graph": self.timestamp_graph,
            "original_hoop": self.original_hoop,
            "modified_hoop": self.modified_hoop,
            "disagreement": self.disagreement,
        }


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]

    @property
    def disagreements(self) -> list[ComparisonRow]:
        return [r for r in self.rows if r.disagreement]

    def row(self, replica: int, edge: Edge) -> ComparisonRow:
        for r in self.rows:
            if r.replica == replica and r.edge == edge:
                return r
        raise KeyError((replica, edge))

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "disagreements": [r.to_dict() for r in self.disagreements],
        }


def compare_conditions(graph: ShareGraph, max_hoop_length: int | None = None) -> ComparisonReport:
    """Tabulate, per replica and non-incident edge, which tracking rule demands the edge.

    A hoop rule demands ``e_jk`` at ``i`` when ``i`` is interior to a minimal
    x-hoop between ``j`` and ``k`` for some register ``x`` they share.
    """
    tsgs = all_timestamp_graphs(graph)
    demands: dict[str, set[tuple[int, frozenset[int]]]] = {"original": set(), "modified": set()}
    registers = sorted(set().union(*graph.replica_registers.values())) if graph.vertices else []
    for x in registers:
        if len(graph.holders(x)) < 2:
            continue
        for hoop in find_hoops(graph, x, max_hoop_length):
            pair = frozenset(hoop.ends)
            for variant, seen in demands.items():
                if all((v, pair) in seen for v in hoop.interior):
                    continue
                if is_minimal_hoop(graph, hoop, variant):
                    seen.update((v, pair) for v in hoop.interior)
    rows = []
    for i in graph.vertices:
        for e in graph.edges:
            if i in e:
                continue
            pair = frozenset(e)
            rows.append(
                ComparisonRow(
                    i,
                    e,
                    e in tsgs[i],
                    (i, pair) in demands["original"],
                    (i, pair) in demands["modified"],
                )
            )
    return ComparisonReport(rows)
