"""Lower-bound toolkit: causal-past enumeration, conflicts, and exact colouring.

Updates are identified across executions by ``(issuer, register, seq)`` so
that pasts from different executions can be compared as plain sets.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .graph_analysis import loop_splits, simple_cycles_through
from .protocol import EdgeTimestamp, advance, merge, predicate_j
from .topology import Edge, ShareGraph, Topology, build_share_graph

Update = tuple[int, str, int]
Past = frozenset  # frozenset[Update]


class ExplosionGuard(RuntimeError):
    pass


def restrict(S: Iterable[Update], e: Edge, graph: ShareGraph) -> frozenset[Update]:
    """Updates in ``S`` issued by ``e[0]`` on registers shared across ``e``; empty off the graph."""
    shared = graph.shared(*e)
    if not shared:
        return frozenset()
    return frozenset(u for u in S if u[0] == e[0] and u[1] in shared)


# --- conflicts --------------------------------------------------------------------


@dataclass(frozen=True)
class ConflictWitness:
    edge: Edge
    loop: Optional[tuple[int, ...]] = None  # (i, l_1..l_s, r_1..r_t) when certified by a loop

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"edge": list(self.edge)}
        if self.loop is not None:
            out["loop"] = list(self.loop)
        return out


LoopShape = tuple[Edge, tuple[int, ...], tuple[int, ...]]


def loop_shapes(graph: ShareGraph, i: int) -> list[LoopShape]:
    """All ``(e_{r_1 l_s}, l_path, r_path)`` from simple loops through ``i``."""
    out = []
    for cyc in simple_cycles_through(graph, i):
        for loop in loop_splits(cyc):
            out.append((loop.edge, tuple(loop.l_path), tuple(loop.r_path)))
    return out


def conflicts(
    S1: Iterable[Update],
    S2: Iterable[Update],
    i: int,
    graph: ShareGraph,
    loops: Optional[list[LoopShape]] = None,
) -> Optional[ConflictWitness]:
    """The conflict predicate, directional in its strict-subset clause.

    Returns a witness (truthy) or None.  ``loops`` may be passed in to avoid
    re-enumerating cycles for every pair.
    """
    S1, S2 = frozenset(S1), frozenset(S2)
    r1: dict[Edge, frozenset[Update]] = {}
    r2: dict[Edge, frozenset[Update]] = {}

    def R(x: int, e: Edge) -> frozenset[Update]:
        cache, S = (r1, S1) if x == 1 else (r2, S2)
        if e not in cache:
            cache[e] = restrict(S, e, graph)
        return cache[e]

    for e in graph.edges:
        if not R(1, e) or not R(2, e):
            return None
    for e in graph.edges:
        if i in e and R(1, e) < R(2, e):
            return ConflictWitness(e)
    for e, l_path, r_path in loops if loops is not None else loop_shapes(graph, i):
        if not R(1, e) < R(2, e):
            continue
        rs = r_path + (i,)
        ok = all(
            R(1, (rs[p], l)) == R(2, (rs[p], l))
            for p in range(len(rs))
            for l in l_path
            if (rs[p], l) != e
        )
        if not ok:
            continue
        for p in range(len(r_path)):
            a, b = rs[p], rs[p + 1]
            for x in (1, 2):
                rest = R(x, (a, b)).difference(*(R(x, (a, l)) for l in l_path))
                if not rest:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return ConflictWitness(e, (i,) + l_path + r_path)
    return None


# --- exhaustive enumeration -------------------------------------------------------


@dataclass
class Enumeration:
    replica: int
    m: int
    pasts: list[Past]
    timestamps: dict[Past, EdgeTimestamp]
    realized: set[tuple[int, ...]]
    determinism_violations: list[tuple[Past, EdgeTimestamp, EdgeTimestamp]]
    witnesses: dict[Past, list[dict[str, Any]]]
    states: int


def _topology_of(graph: ShareGraph) -> Topology:
    return Topology(dict(graph.replica_registers))


def register_classes(graph: ShareGraph) -> dict[str, tuple[str, ...]]:
    """Each register mapped to every register with the same holder set, itself first.

    The protocol sees a register only through its holders, so any update may
    be renamed within its class without changing any timestamp.
    """
    classes: dict[tuple[int, ...], list[str]] = {}
    for x in sorted(set().union(*(graph.registers(r) for r in graph.vertices))):
        classes.setdefault(graph.holders(x), []).append(x)
    return {x: tuple([x] + [y for y in xs if y != x]) for xs in classes.values() for x in xs}


class _Space:
    """Integer encoding of the execution space: timestamps as tuples, update sets as bitmasks."""

    def __init__(self, graph: ShareGraph, edge_sets: dict[int, Iterable[Edge]], m: int) -> None:
        self.graph = graph
        self.reps = graph.vertices
        self.pos = {r: n for n, r in enumerate(self.reps)}
        self.edges = {r: tuple(sorted(edge_sets[r])) for r in self.reps}
        self.epos = {r: {e: n for n, e in enumerate(es)} for r, es in self.edges.items()}
        self.regs = {r: tuple(sorted(graph.registers(r))) for r in self.reps}
        self.ids: list[Update] = [(r, x, s) for r in self.reps for x in self.regs[r] for s in range(1, m + 1)]
        self.bit = {u: n for n, u in enumerate(self.ids)}
        self.holders = {x: graph.holders(x) for r in self.reps for x in self.regs[r]}
        self.inc = {
            (r, x): tuple(self.epos[r][(r, k)] for k in graph.neighbors(r) if x in graph.shared(r, k) and (r, k) in self.epos[r])
            for r in self.reps
            for x in self.regs[r]
        }
        self.gate: dict[tuple[int, int], tuple[int, int, tuple[tuple[int, int], ...]]] = {}
        self.common: dict[tuple[int, int], tuple[tuple[int, int], ...]] = {}
        for r in self.reps:
            for src in self.reps:
                if r == src:
                    continue
                both = [(self.epos[r][e], self.epos[src][e]) for e in self.edges[r] if e in self.epos[src]]
                self.common[(r, src)] = tuple(both)
                e = (src, r)
                if e in self.epos[r] and e in self.epos[src]:
                    others = tuple(
                        (self.epos[r][f], self.epos[src][f])
                        for f in self.edges[r]
                        if f[1] == r and f[0] != src and f in self.epos[src]
                    )
                    self.gate[(r, src)] = (self.epos[r][e], self.epos[src][e], others)

    def mask_ids(self, mask: int) -> frozenset[Update]:
        out = []
        n = 0
        while mask:
            if mask & 1:
                out.append(self.ids[n])
            mask >>= 1
            n += 1
        return frozenset(out)

    def bit_map(self, sigma: dict[str, str]) -> list[int]:
        return [self.bit[(r, sigma[x], s)] for r, x, s in self.ids]


def _map_mask(mask: int, table: list[int]) -> int:
    out = 0
    n = 0
    while mask:
        if mask & 1:
            out |= 1 << table[n]
        mask >>= 1
        n += 1
    return out


def enumerate_causal_pasts(
    graph: ShareGraph,
    i: int,
    m: int,
    edge_sets: Optional[dict[int, Iterable[Edge]]] = None,
    force: bool = False,
    max_states: int = 5_000_000,
    reduce: bool = True,
) -> Enumeration:
    """Every causal past of ``i`` reachable when each replica issues at most ``m`` updates.

    The search explores all interleavings of issues (on every register
    choice) and applies.  Delivery and application are merged into one
    step, which reaches the same states as buffering: a message waiting in a
    buffer is indistinguishable from one still in flight.

    ``reduce`` enables two exact reductions.  Writes use one representative
    register per holder class, and recorded pasts are expanded afterwards by
    renaming each update independently within its class.  Replicas other
    than ``i`` apply updates only in a batch right before their next write,
    since nothing they apply is visible elsewhere until they issue.
    """
    from .graph_analysis import all_timestamp_graphs

    R = len(graph.vertices)
    if (R > 3 or m > 2) and not force:
        raise ExplosionGuard(f"R={R}, m={m} exceeds the default bounds R<=3, m<=2; pass force=True")
    if R > 3 or m > 2:
        warnings.warn("enumerating beyond the default bounds", RuntimeWarning, stacklevel=2)
    if edge_sets is None:
        edge_sets = {r: t.edges for r, t in all_timestamp_graphs(graph).items()}
    sp = _Space(graph, edge_sets, m)
    reps, pos = sp.reps, sp.pos
    classes = register_classes(graph) if reduce else {x: (x,) for x in sp.holders}
    writable = {r: tuple(x for x in sp.regs[r] if x == min(classes[x])) for r in reps}
    me = pos[i]

    # state = (issued, applied, taus, pasts); issued[n] is a tuple of (bit, T, pred) records
    zero_taus = tuple((0,) * len(sp.edges[r]) for r in reps)
    start = (tuple(() for _ in reps), (0,) * R, zero_taus, (0,) * R)
    parent: dict[Any, Any] = {start: None}
    stack = [start]
    seen_pasts: dict[int, tuple[int, ...]] = {}
    first_state: dict[int, Any] = {}
    realized: set[tuple[int, ...]] = set()
    bad: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = []

    def push(state: Any, action: tuple, nxt: Any) -> None:
        if nxt not in parent:
            parent[nxt] = (state, action)
            stack.append(nxt)
            if len(parent) > max_states:
                raise ExplosionGuard(f"more than {max_states} states")

    def inbox(issued: tuple, applied: tuple, r: int) -> list[tuple[int, tuple[int, ...], int, int]]:
        n = pos[r]
        return [
            (b, T, pred, src)
            for src in reps
            if src != r and (r, src) in sp.gate
            for b, T, pred in issued[pos[src]]
            if r in sp.holders[sp.ids[b][1]] and not applied[n] >> b & 1
        ]

    def apply(local: tuple, r: int, msg: tuple) -> Optional[tuple]:
        a, tau, p = local
        b, T, pred, src = msg
        if a >> b & 1:
            return None
        at_r, at_src, others = sp.gate[(r, src)]
        if tau[at_r] != T[at_src] - 1 or any(tau[x] < T[c] for x, c in others):
            return None
        merged = list(tau)
        for x, c in sp.common[(r, src)]:
            if T[c] > merged[x]:
                merged[x] = T[c]
        return (a | 1 << b, tuple(merged), p | pred | 1 << b)

    def closure(state: Any, r: int) -> dict[tuple, tuple]:
        """Local states ``r`` reaches by applies alone, each with the updates applied on the way."""
        issued, applied, taus, pasts = state
        n = pos[r]
        msgs = inbox(issued, applied, r)
        start = (applied[n], taus[n], pasts[n])
        paths: dict[tuple, tuple] = {start: ()}
        todo = [start]
        while todo:
            local = todo.pop()
            for msg in msgs:
                nxt = apply(local, r, msg)
                if nxt is not None and nxt not in paths:
                    paths[nxt] = paths[local] + (msg[0],)
                    todo.append(nxt)
        return paths

    def issue(state: Any, r: int, local: tuple, x: str) -> Any:
        issued, applied, taus, pasts = state
        n = pos[r]
        a, tau, p = local
        b = sp.bit[(r, x, len(issued[n]) + 1)]
        T = list(tau)
        for k in sp.inc[(r, x)]:
            T[k] += 1
        T = tuple(T)
        if reduce and r != i and len(issued[n]) + 1 == m:
            # r has nothing left to issue, so its local state is never read again
            return (_put(issued, n, issued[n] + ((b, T, p),)), _put(applied, n, -1), _put(taus, n, ()), _put(pasts, n, 0))
        return (
            _put(issued, n, issued[n] + ((b, T, p),)),
            _put(applied, n, a | 1 << b),
            _put(taus, n, T),
            _put(pasts, n, p | 1 << b),
        )

    while stack:
        state = stack.pop()
        issued, applied, taus, pasts = state
        P, tau_i = pasts[me], taus[me]
        realized.add(tau_i)
        prev = seen_pasts.get(P)
        if prev is None:
            seen_pasts[P] = tau_i
            first_state[P] = state
        elif prev != tau_i:
            bad.append((P, prev, tau_i))

        for r in reps:
            n = pos[r]
            if r == i or not reduce:
                # the observer moves one step at a time
                if len(issued[n]) < m:
                    for x in writable[r]:
                        push(state, ("write", r, x), issue(state, r, (applied[n], taus[n], pasts[n]), x))
                for msg in inbox(issued, applied, r):
                    local = apply((applied[n], taus[n], pasts[n]), r, msg)
                    if local is not None:
                        nxt = (issued, _put(applied, n, local[0]), _put(taus, n, local[1]), _put(pasts, n, local[2]))
                        push(state, ("deliver", sp.ids[msg[0]], r), nxt)
            elif len(issued[n]) < m and writable[r]:
                # any other replica matters only through what it issues, so its
                # applies are postponed to just before its next write
                for local, path in closure(state, r).items():
                    for x in writable[r]:
                        push(state, ("batch", r, tuple(sp.ids[b] for b in path), x), issue(state, r, local, x))

    stamp = lambda vals: EdgeTimestamp(sp.edges[i], vals)  # noqa: E731
    timestamps: dict[Past, EdgeTimestamp] = {}
    witnesses: dict[Past, list[dict[str, Any]]] = {}
    violations: list[tuple[Past, EdgeTimestamp, EdgeTimestamp]] = []
    for P, tau_i in seen_pasts.items():
        ops = _witness(parent, first_state[P])
        for img, sigma in _expand(sp.mask_ids(P), classes):
            timestamps[img] = stamp(tau_i)
            witnesses[img] = _rename_ops(ops, sigma)
    for P, a, b in bad:
        for img, _ in _expand(sp.mask_ids(P), classes):
            violations.append((img, stamp(a), stamp(b)))
    order = sorted(timestamps, key=lambda P: (len(P), sorted(P)))
    return Enumeration(i, m, order, timestamps, realized, violations, witnesses, len(parent))


def _put(t: tuple, n: int, v: Any) -> tuple:
    return t[:n] + (v,) + t[n + 1 :]


def _expand(P: frozenset[Update], classes: dict[str, tuple[str, ...]]) -> Iterable[tuple[Past, dict[tuple[int, int], str]]]:
    """Every past obtained by renaming each update of ``P`` within its register class."""
    ups = sorted(P)
    for choice in itertools.product(*(classes[x] for _, x, _ in ups)):
        yield frozenset((r, y, s) for (r, _, s), y in zip(ups, choice)), {
            (r, s): y for (r, _, s), y in zip(ups, choice)
        }


def _witness(parent: dict[Any, Any], state: Any) -> list[dict[str, Any]]:
    """Operations reaching ``state`` from the empty execution."""
    steps = []
    while parent[state] is not None:
        state, action = parent[state]
        steps.append(action)
    steps.reverse()
    ops: list[dict[str, Any]] = []
    value = 0
    for action in steps:
        if action[0] == "batch":
            _, r, delivered, x = action
            ops.extend({"op": "deliver", "update": [u[0], u[2]], "to": r, "register": u[1]} for u in delivered)
            action = ("write", r, x)
        if action[0] == "write":
            value += 1
            ops.append({"op": "write", "replica": action[1], "register": action[2], "value": value})
        else:
            u, r = action[1], action[2]
            ops.append({"op": "deliver", "update": [u[0], u[2]], "to": r, "register": u[1]})
    return ops


def _rename_ops(ops: list[dict[str, Any]], sigma: dict[tuple[int, int], str]) -> list[dict[str, Any]]:
    """Point each operation at the register ``sigma`` picks for its update; unlisted updates keep theirs."""
    out = []
    seq: dict[int, int] = {}
    for op in ops:
        op = dict(op)
        if op["op"] == "write":
            seq[op["replica"]] = key_seq = seq.get(op["replica"], 0) + 1
            key = (op["replica"], key_seq)
        else:
            key = tuple(op["update"])
        op["register"] = sigma.get(key, op["register"])
        out.append(op)
    return out


def replay_witness(graph: ShareGraph, i: int, ops: list[dict[str, Any]]) -> Past:
    """Run a witness through the simulator and read ``i``'s causal past off the trace."""
    from .checker import causal_past
    from .simulator import Simulation

    sim = Simulation(_topology_of(graph))
    for op in ops:
        sim.execute(op)
    if not sim.trace.events:
        return frozenset()
    regs = {e.update: e.register for e in sim.trace.of_kind("issue")}
    past = causal_past(sim.trace, i, sim.trace.events[-1].step)
    return frozenset((u[0], regs[u], u[1]) for u in past)


# --- conflict graph and colouring -------------------------------------------------


@dataclass
class ConflictGraph:
    vertices: list[Past]
    edges: set[tuple[int, int]] = field(default_factory=set)
    replica: Optional[int] = None
    graph: Optional[ShareGraph] = field(default=None, repr=False)

    def adjacency(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in self.vertices]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def witness(self, a: int, b: int) -> Optional[ConflictWitness]:
        """Why two vertices conflict, recomputed on demand."""
        if self.graph is None or self.replica is None:
            raise ValueError("conflict graph was built without its share graph")
        S1, S2 = self.vertices[a], self.vertices[b]
        loops = loop_shapes(self.graph, self.replica)
        return conflicts(S1, S2, self.replica, self.graph, loops) or conflicts(S2, S1, self.replica, self.graph, loops)


def conflict_graph(pasts: list[Past], i: int, graph: ShareGraph) -> ConflictGraph:
    """Edge between two pasts when either orientation of the predicate holds.

    Same relation as calling :func:`conflicts` on every pair, computed in
    bulk: restrictions become bitmasks, the strict-subset clauses only look
    at restriction values, and the loop clause's equality requirement
    buckets candidates before any pair is formed.
    """
    H = ConflictGraph(list(pasts), replica=i, graph=graph)
    updates = sorted(set().union(*pasts)) if pasts else []
    bit = {u: n for n, u in enumerate(updates)}
    emask = {}
    for e in graph.edges:
        shared = graph.shared(*e)
        emask[e] = sum(1 << bit[u] for u in updates if u[0] == e[0] and u[1] in shared)
    masks = [sum(1 << bit[u] for u in P) for P in pasts]
    # condition 1: only pasts seen on every edge can conflict
    covered = [n for n in range(len(pasts)) if all(masks[n] & emask[e] for e in graph.edges)]

    def R(n: int, e: Edge) -> int:
        return masks[n] & emask.get(e, 0)

    def link(group: list[int], e: Edge) -> None:
        """Join every pair whose restrictions to ``e`` are strictly nested."""
        by_value: dict[int, list[int]] = {}
        for n in group:
            by_value.setdefault(R(n, e), []).append(n)
        for v1, small in by_value.items():
            for v2, big in by_value.items():
                if v1 != v2 and v1 & ~v2 == 0:
                    H.edges.update((min(a, b), max(a, b)) for a in small for b in big)

    for e in graph.edges:
        if i in e:
            link(covered, e)
    for e, l_path, r_path in loop_shapes(graph, i):
        rs = r_path + (i,)
        same = [(rs[p], l) for p in range(len(rs)) for l in l_path if (rs[p], l) != e]
        hops = [(rs[p], rs[p + 1]) for p in range(len(r_path))]
        buckets: dict[tuple[int, ...], list[int]] = {}
        for n in covered:
            residual = all(R(n, h) & ~_union(R(n, (h[0], l)) for l in l_path) for h in hops)
            if residual:
                buckets.setdefault(tuple(R(n, f) for f in same), []).append(n)
        for group in buckets.values():
            link(group, e)
    return H


def _union(masks: Iterable[int]) -> int:
    out = 0
    for v in masks:
        out |= v
    return out


def chromatic_number(H: ConflictGraph | list[set[int]], cap: int = 64) -> int:
    """Exact chromatic number, one component at a time.

    Each component is bracketed by a greedy clique (lower bound) and a
    greedy DSATUR colouring (upper bound).  When they meet the answer is
    proved at any size; otherwise DSATUR branch and bound closes the gap,
    which is only attempted on components of at most ``cap`` vertices.
    Isolated vertices never raise the count.
    """
    adj = H.adjacency() if isinstance(H, ConflictGraph) else [set(s) for s in H]
    if not adj:
        return 0
    best = 1
    seen: set[int] = set()
    for v in range(len(adj)):
        if v in seen or not adj[v]:
            continue
        comp, todo = [], [v]
        seen.add(v)
        while todo:
            u = todo.pop()
            comp.append(u)
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        comp.sort()
        idx = {u: n for n, u in enumerate(comp)}
        nbrs = [[idx[w] for w in adj[u]] for u in comp]
        lower = len(greedy_clique(nbrs))
        upper = max(dsatur_colouring(nbrs)) + 1
        if lower < upper:
            if len(comp) > cap:
                raise ExplosionGuard(
                    f"component with {len(comp)} vertices exceeds cap {cap} (bounds {lower}..{upper})"
                )
            upper = _color_component(nbrs, lower, upper)
        best = max(best, upper)
    return best


def greedy_clique(nbrs: list[list[int]], starts: int = 32) -> list[int]:
    """A large clique grown greedily from the highest-degree vertices."""
    sets = [set(ns) for ns in nbrs]
    order = sorted(range(len(nbrs)), key=lambda v: (-len(nbrs[v]), v))
    best: list[int] = []
    for v in order[:starts]:
        clique, cand = [v], set(sets[v])
        while cand:
            w = max(cand, key=lambda u: (len(sets[u] & cand), -u))
            clique.append(w)
            cand &= sets[w]
        if len(clique) > len(best):
            best = clique
    return sorted(best)


def dsatur_colouring(nbrs: list[list[int]]) -> list[int]:
    """Greedy DSATUR: colour the most saturated vertex next, smallest free colour."""
    size = len(nbrs)
    colors = [-1] * size
    sat: list[set[int]] = [set() for _ in range(size)]
    left = set(range(size))
    while left:
        v = max(left, key=lambda u: (len(sat[u]), len(nbrs[u]), -u))
        c = 0
        while c in sat[v]:
            c += 1
        colors[v] = c
        left.discard(v)
        for w in nbrs[v]:
            sat[w].add(c)
    return colors


def _color_component(nbrs: list[list[int]], lower: int, upper: int) -> int:
    """Smallest colouring by DSATUR branch and bound, stopping early at ``lower``."""
    size = len(nbrs)
    colors = [-1] * size
    best = [upper]

    def pick() -> int:
        choice, key = -1, None
        for v in range(size):
            if colors[v] >= 0:
                continue
            sat = len({colors[w] for w in nbrs[v] if colors[w] >= 0})
            k = (sat, len(nbrs[v]), -v)
            if key is None or k > key:
                choice, key = v, k
        return choice

    def search(done: int, used: int) -> bool:
        if used >= best[0]:
            return False
        if done == size:
            best[0] = used
            return used <= lower
        v = pick()
        taken = {colors[w] for w in nbrs[v]}
        for c in range(used + 1):
            grown = max(used, c + 1)
            if c in taken or grown >= best[0]:
                continue
            colors[v] = c
            if search(done + 1, grown):
                return True
            colors[v] = -1
        return False

    search(0, 0)
    return best[0]


# --- the comparison ---------------------------------------------------------------


@dataclass
class BoundReport:
    replica: int
    m: int
    pasts: int
    states: int
    chromatic: int
    realized: int
    past_determines_tau: bool
    conflict_edges: int

    @property
    def holds(self) -> bool:
        return self.chromatic <= self.realized and self.past_determines_tau

    def to_dict(self) -> dict[str, Any]:
        return {
            "replica": self.replica,
            "m": self.m,
            "causal_pasts": self.pasts,
            "states": self.states,
            "conflict_edges": self.conflict_edges,
            "chromatic_number": self.chromatic,
            "realized_timestamps": self.realized,
            "past_determines_timestamp": "pass" if self.past_determines_tau else "fail",
            "bound": "pass" if self.holds else "fail",
        }


def bound_report(graph: ShareGraph, i: int, m: int, force: bool = False, cap: int = 64) -> BoundReport:
    """Compare the colouring lower bound against timestamps the algorithm actually uses."""
    en = enumerate_causal_pasts(graph, i, m, force=force)
    H = conflict_graph(en.pasts, i, graph)
    chi = chromatic_number(H, cap)
    return BoundReport(
        i, m, len(en.pasts), en.states, chi, len(en.realized), not en.determinism_violations, len(H.edges)
    )


def small_topologies(max_replicas: int = 3, max_per_pair: int = 2) -> list[Topology]:
    """Every share-graph shape on up to ``max_replicas`` replicas, up to relabelling.

    Registers are described by their holder sets (two or more replicas);
    each pair may share at most ``max_per_pair`` registers.
    """
    out: list[Topology] = []
    seen: set[Any] = set()
    for R in range(2, max_replicas + 1):
        groups = [g for k in range(2, R + 1) for g in itertools.combinations(range(1, R + 1), k)]
        for mult in itertools.product(range(max_per_pair + 1), repeat=len(groups)):
            pair_load = {p: 0 for p in itertools.combinations(range(1, R + 1), 2)}
            for g, c in zip(groups, mult):
                for p in itertools.combinations(g, 2):
                    pair_load[p] += c
            if any(v > max_per_pair for v in pair_load.values()) or not any(mult):
                continue
            canon = min(
                tuple(sorted((tuple(sorted(perm[r - 1] for r in g)), c) for g, c in zip(groups, mult) if c))
                for perm in itertools.permutations(range(1, R + 1))
            )
            if canon in seen:
                continue
            seen.add(canon)
            regs: dict[int, set[str]] = {r: set() for r in range(1, R + 1)}
            for g, c in canon:
                for n in range(c):
                    name = "r" + "".join(map(str, g)) + chr(ord("a") + n)
                    for r in g:
                        regs[r].add(name)
            out.append(Topology({r: frozenset(xs) for r, xs in regs.items()}))
    return out


def past_determines_timestamp(graph: ShareGraph, i: int, m: int) -> bool:
    return not enumerate_causal_pasts(graph, i, m).determinism_violations


def report_for_topology(topology: Topology, m: int) -> list[BoundReport]:
    graph = build_share_graph(topology)
    return [bound_report(graph, i, m) for i in topology.replicas]
