"""Timestamp compression analysis and dummy-register planning.

Compression is reported, never shipped: the runtime protocol always carries
the full edge-indexed vector.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Literal, Optional

from .graph_analysis import TimestampGraph, all_timestamp_graphs, simple_cycles_through
from .simulator import Scenario, Trace, random_operations, run_scenario
from .topology import Edge, ShareGraph, Topology, apply_dummies, build_share_graph

Vector = tuple[int, ...]


def _solve(columns: list[Vector], target: Vector) -> Optional[list[Fraction]]:
    """Exact coefficients ``c`` with ``sum(c[n] * columns[n]) == target``, or None."""
    if not columns:
        return [] if not any(target) else None
    rows = len(target)
    width = len(columns)
    m = [[Fraction(columns[c][r]) for c in range(width)] + [Fraction(target[r])] for r in range(rows)]
    pivots: list[int] = []
    r = 0
    for c in range(width):
        p = next((k for k in range(r, rows) if m[k][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for k in range(rows):
            if k != r and m[k][c] != 0:
                f = m[k][c]
                m[k] = [a - f * b for a, b in zip(m[k], m[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    if any(all(v == 0 for v in m[k][:width]) and m[k][width] != 0 for k in range(rows)):
        return None
    coeffs = [Fraction(0)] * width
    for k, c in enumerate(pivots):
        coeffs[c] = m[k][width]
    return coeffs


@dataclass(frozen=True)
class SourcePlan:
    source: int
    edges: tuple[Edge, ...]  # O_j
    basis: tuple[Edge, ...]  # I_j
    registers: tuple[str, ...]  # registers appearing on O_j
    reconstruction: dict[Edge, dict[Edge, Fraction]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "edges": [list(e) for e in self.edges],
            "basis": [list(e) for e in self.basis],
            "reconstruction": {
                f"{a}->{b}": {f"{c}->{d}": str(f) for (c, d), f in combo.items()}
                for (a, b), combo in sorted(self.reconstruction.items())
            },
        }


@dataclass(frozen=True)
class CompressionPlan:
    owner: int
    sources: dict[int, SourcePlan]

    @property
    def edge_count(self) -> int:
        return sum(len(p.edges) for p in self.sources.values())

    @property
    def compressed_count(self) -> int:
        return sum(len(p.basis) for p in self.sources.values())

    def reconstruct(self, counts: dict[Edge, int]) -> dict[Edge, Fraction]:
        """Every O_j count computed from basis counts only."""
        out: dict[Edge, Fraction] = {}
        for p in self.sources.values():
            for e in p.basis:
                out[e] = Fraction(counts[e])
            for e, combo in p.reconstruction.items():
                out[e] = sum((f * counts[b] for b, f in combo.items()), Fraction(0))
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "owner": self.owner,
            "edges": self.edge_count,
            "compressed_count": self.compressed_count,
            "sources": [p.to_dict() for p in self.sources.values()],
        }


def compression_plan(graph: ShareGraph, tsg: TimestampGraph) -> CompressionPlan:
    """Greedy rank basis per source over register-incidence vectors, in canonical edge order."""
    by_source: dict[int, list[Edge]] = {}
    for e in sorted(tsg.edges):
        by_source.setdefault(e[0], []).append(e)
    sources = {}
    for j, edges in sorted(by_source.items()):
        regs = tuple(sorted(set().union(*(graph.shared(*e) for e in edges))))
        vec = {e: tuple(int(x in graph.shared(*e)) for x in regs) for e in edges}
        basis: list[Edge] = []
        recon: dict[Edge, dict[Edge, Fraction]] = {}
        for e in edges:
            coeffs = _solve([vec[b] for b in basis], vec[e])
            if coeffs is None:
                basis.append(e)
            else:
                recon[e] = {b: c for b, c in zip(basis, coeffs) if c != 0}
        sources[j] = SourcePlan(j, tuple(edges), tuple(basis), regs, recon)
    return CompressionPlan(tsg.owner, sources)


def register_level_counts(plan: CompressionPlan) -> dict[str, Any]:
    """Alternative scheme: one counter per (source, register) appearing on O_j."""
    per_source = {
        j: {"edges": len(p.edges), "edge_basis": len(p.basis), "register_counters": len(p.registers)}
        for j, p in plan.sources.items()
    }
    return {
        "owner": plan.owner,
        "per_source": per_source,
        "edge_basis_total": plan.compressed_count,
        "register_counters_total": sum(len(p.registers) for p in plan.sources.values()),
    }


# --- reconstruction replay --------------------------------------------------------


def final_timestamps(trace: Trace) -> dict[int, dict[Edge, int]]:
    """Last timestamp each replica reported in the trace."""
    out: dict[int, dict[Edge, int]] = {}
    for ev in trace:
        if ev.kind in ("issue", "apply") and ev.timestamp is not None:
            out[ev.replica] = ev.timestamp.as_dict()
    return out


def issued_edge_counts(trace: Trace, graph: ShareGraph) -> dict[Edge, int]:
    """Updates per directed edge, counted straight from issue events."""
    counts = {e: 0 for e in graph.edges}
    for ev in trace.of_kind("issue"):
        for k in graph.neighbors(ev.replica):
            if ev.register in graph.shared(ev.replica, k):
                counts[(ev.replica, k)] += 1
    return counts


def check_reconstruction(trace: Trace, graph: ShareGraph, plans: Iterable[CompressionPlan]) -> list[dict[str, Any]]:
    """Compare reconstructed counts against the issuers' own final counters and issue counts.

    Returns a list of mismatches (empty when sound).
    """
    final = final_timestamps(trace)
    issued = issued_edge_counts(trace, graph)
    problems = []
    for plan in plans:
        # each source's counters are read from that source's own timestamp
        counts = {e: final.get(j, {}).get(e, 0) for j, p in plan.sources.items() for e in p.edges}
        got = plan.reconstruct(counts)
        for p in plan.sources.values():
            for e in p.edges:
                if got[e] != issued[e] or counts[e] != issued[e]:
                    problems.append(
                        {"owner": plan.owner, "edge": list(e), "reconstructed": str(got[e]), "actual": issued[e]}
                    )
    return problems


# --- dummy registers --------------------------------------------------------------


DummyTarget = Literal["full", "selective"]


def dummy_plan(topology: Topology, target: DummyTarget = "full") -> frozenset[tuple[int, str]]:
    """Metadata-only copies to add.

    ``full`` gives every replica every register it lacks, emulating full
    replication.  ``selective`` adds, at each replica ``j``, the registers
    labelling edges of simple cycles through ``j`` that ``j`` does not
    already store; neighbour-shared registers are stored by definition.
    """
    regs = topology.replica_registers
    if target == "full":
        everything = set(topology.registers)
        return frozenset((r, x) for r in topology.replicas for x in everything - regs[r])
    if target != "selective":
        raise ValueError(f"unknown dummy target {target!r}")
    graph = build_share_graph(topology)
    out: set[tuple[int, str]] = set()
    for j in topology.replicas:
        wanted: set[str] = set()
        for cyc in simple_cycles_through(graph, j):
            ring = cyc + (cyc[0],)
            for a, b in zip(ring, ring[1:]):
                wanted |= graph.shared(a, b)
        out |= {(j, x) for x in wanted - regs[j]}
    return frozenset(out)


def size_report(topology: Topology) -> dict[str, Any]:
    graph = build_share_graph(topology)
    tsgs = all_timestamp_graphs(graph)
    rows = {}
    for i, tsg in tsgs.items():
        plan = compression_plan(graph, tsg)
        rows[i] = {"edges": len(tsg), "compressed_count": plan.compressed_count}
    return {
        "replicas": rows,
        "total_edges": sum(r["edges"] for r in rows.values()),
        "total_compressed": sum(r["compressed_count"] for r in rows.values()),
    }


def dummy_report(topology: Topology, target: DummyTarget = "full") -> dict[str, Any]:
    plan = dummy_plan(topology, target)
    after = apply_dummies(topology, plan)
    return {
        "target": target,
        "dummies": [[r, x] for r, x in sorted(plan)],
        "before": size_report(topology),
        "after": size_report(after),
    }


def buffering_delays(trace: Trace) -> list[int]:
    """Steps each received update spent between delivery and apply."""
    arrived: dict[tuple[int, tuple[int, int]], int] = {}
    delays = []
    for ev in trace:
        if ev.kind == "deliver" and ev.update is not None:
            arrived[(ev.replica, ev.update)] = ev.step
        elif ev.kind == "apply":
            t = arrived.pop((ev.replica, ev.update), None)
            if t is not None:
                delays.append(ev.step - t - 1)
    return delays


def false_dependency_report(
    topology: Topology, target: DummyTarget = "full", seeds: Iterable[int] = range(20), m: int = 3
) -> dict[str, Any]:
    """Buffering with and without dummies on the same scripted writes.

    Schedules differ between the two runs (dummy copies add messages), so
    only aggregate delay is comparable.
    """
    with_dummies = apply_dummies(topology, dummy_plan(topology, target))
    stats = {"plain": [0, 0, 0], "dummies": [0, 0, 0]}  # applies, buffered, total delay
    for seed in seeds:
        ops = random_operations(topology, random.Random(seed), m)
        for key, top in (("plain", topology), ("dummies", with_dummies)):
            trace = run_scenario(Scenario(top, ops, "random", seed))
            d = buffering_delays(trace)
            stats[key][0] += len(d)
            stats[key][1] += sum(1 for x in d if x > 0)
            stats[key][2] += sum(d)
    out: dict[str, Any] = {"target": target}
    for key, (n, buffered, total) in stats.items():
        out[key] = {
            "remote_applies": n,
            "buffered_applies": buffered,
            "mean_delay": round(total / n, 4) if n else 0.0,
        }
    return out
