"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import os
import random
import subprocess
import sys
import time

import pytest

from causalshare.bounds import small_topologies, bound_report
from causalshare.graph_analysis import all_timestamp_graphs, compare_conditions, is_loop, timestamp_graph
from causalshare.optimization import check_reconstruction, compression_plan
from causalshare.protocol import predicate_without_incoming, predicate_without_successor
from causalshare.simulator import Scenario, fuzz_one, random_operations, random_topology, run_scenario
from causalshare.topology import Topology, build_share_graph
from conftest import GOLDEN, fixture
from test_graph_analysis import split


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_criterion_1_fig5a(capsys):
    start = time.perf_counter()
    g = build_share_graph(fixture("fig5a"))
    E1 = timestamp_graph(g, 1)
    checks = [
        (4, 3) in E1,
        (3, 4) not in E1,
        is_loop(g, split((1, 2, 3, 4), (4, 3)), (4, 3)),
        is_loop(g, split((1, 2, 3, 4), (3, 2)), (3, 2)),
        not is_loop(g, split((1, 4, 3, 2), (3, 4)), (3, 4)),
        not is_loop(g, split((1, 4, 3, 2), (2, 3)), (2, 3)),
    ]
    elapsed = time.perf_counter() - start
    report(capsys, 1, all(checks) and elapsed < 1, f"{sum(checks)}/6 verdicts, {elapsed:.3f}s")


def test_criterion_2_hoop_rules(capsys):
    start = time.perf_counter()
    a = compare_conditions(build_share_graph(fixture("fig8a")))
    b = compare_conditions(build_share_graph(fixture("fig8b")))
    # figure labels: i=1, k=4, j=5
    over = all(a.row(1, e).original_hoop and not a.row(1, e).timestamp_graph for e in [(4, 5), (5, 4)])
    under = b.row(1, (4, 5)).timestamp_graph and not b.row(1, (4, 5)).modified_hoop
    elapsed = time.perf_counter() - start
    report(capsys, 2, over and under and elapsed < 1, f"fig8a over-demand={over}, fig8b under-demand={under}, {elapsed:.3f}s")


def random_tree(rng: random.Random, n: int) -> Topology:
    regs: dict[int, set[str]] = {r: set() for r in range(1, n + 1)}
    for v in range(2, n + 1):
        u = rng.randint(1, v - 1)
        x = f"t{u}_{v}"
        regs[u].add(x)
        regs[v].add(x)
    return Topology({r: frozenset(xs) for r, xs in regs.items()})


def test_criterion_3_sizes(capsys):
    rng = random.Random(3)
    bad = []
    for _ in range(5):
        t = random_tree(rng, rng.randint(2, 8))
        g = build_share_graph(t)
        bad += [("tree", i) for i, tsg in all_timestamp_graphs(g).items() if len(tsg) != 2 * len(g.neighbors(i))]
    for n in (3, 4, 5, 6):
        t = Topology({r: frozenset({f"c{r}", f"c{r % n + 1}"}) for r in range(1, n + 1)})
        bad += [("cycle", n) for tsg in all_timestamp_graphs(build_share_graph(t)).values() if len(tsg) != 2 * n]
    for R in (3, 4, 5):
        g = build_share_graph(Topology({r: frozenset("x") for r in range(1, R + 1)}))
        for tsg in all_timestamp_graphs(g).values():
            if len(tsg) != R * (R - 1) or compression_plan(g, tsg).compressed_count != R:
                bad.append(("clique", R))
    report(capsys, 3, not bad, "all size equalities hold" if not bad else f"mismatches {bad}")


def _suite(mode: str, predicate=None):
    runs, topologies, reordered, failures = 0, 0, 0, []
    for tseed in range(25):
        t = random_topology(random.Random(1000 + tseed), max_clients=3 if mode == "client_server" else 0)
        topologies += 1
        for seed in range(20):
            m = 1 + seed % 4
            kw = {"predicate": predicate} if predicate else {}
            res = fuzz_one(t, seed, m, mode, **kw)  # type: ignore[arg-type]
            runs += 1
            last: dict[tuple[int, int], int] = {}
            for e in res.trace.of_kind("deliver"):
                ch = (e.update[0], e.replica)
                if last.get(ch, 0) > e.update[1]:
                    reordered += 1
                last[ch] = max(last.get(ch, 0), e.update[1])
            if not res.ok:
                failures.append((tseed, seed, res.verdict.to_dict()))
    return runs, topologies, reordered, failures


def test_criterion_4_property_suite(capsys):
    start = time.perf_counter()
    peer = _suite("peer")
    cs = _suite("client_server")
    elapsed = time.perf_counter() - start
    ok = all(r >= 500 and t >= 20 and reo > 0 and not f for r, t, reo, f in (peer, cs)) and elapsed <= 300
    detail = (
        f"peer {peer[0]} runs/{peer[1]} topologies/{peer[2]} reorders/{len(peer[3])} failures; "
        f"client-server {cs[0]}/{cs[1]}/{cs[2]}/{len(cs[3])}; {elapsed:.1f}s"
    )
    report(capsys, 4, ok, detail)


def test_criterion_5_mutants(capsys):
    caught = {}
    for name, pred in (("successor", predicate_without_successor), ("incoming", predicate_without_incoming)):
        caught[name] = next(
            (
                (tseed, seed)
                for tseed in range(25)
                for seed in range(20)
                if not fuzz_one(random_topology(random.Random(1000 + tseed)), seed, 3, predicate=pred).ok
            ),
            None,
        )
    report(capsys, 5, all(v is not None for v in caught.values()), f"first detecting (topology, seed): {caught}")


@pytest.mark.parametrize("shape", range(len(small_topologies())))
def test_criterion_6_chromatic_bound(capsys, shape):
    t = small_topologies()[shape]
    g = build_share_graph(t)
    rows, slowest, ok = [], 0.0, True
    for m in (1, 2):
        for i in t.replicas:
            start = time.perf_counter()
            rep = bound_report(g, i, m)
            took = time.perf_counter() - start
            slowest = max(slowest, took)
            ok &= rep.holds and took <= 120
            rows.append(f"{i}/m{m}:{rep.chromatic}<={rep.realized}")
    shape_txt = " ".join(f"{r}:{','.join(sorted(xs))}" for r, xs in t.replica_registers.items())
    report(capsys, 6, ok, f"shape {shape} [{shape_txt}] {' '.join(rows)}; slowest {slowest:.1f}s")


def test_criterion_7_reconstruction(capsys):
    mismatches = 0
    for seed in range(100):
        t = random_topology(random.Random(seed))
        g = build_share_graph(t)
        plans = [compression_plan(g, tsg) for tsg in all_timestamp_graphs(g).values()]
        trace = run_scenario(Scenario(t, random_operations(t, random.Random(seed), 4), seed=seed))
        mismatches += len(check_reconstruction(trace, g, plans))
    report(capsys, 7, mismatches == 0, f"100 traces, {mismatches} mismatched counts")


def _cli(*argv: str, hashseed: str) -> bytes:
    env = dict(os.environ, PYTHONHASHSEED=hashseed)
    return subprocess.run([sys.executable, "-m", "causalshare", *argv], capture_output=True, env=env, check=False).stdout


def test_criterion_8_determinism(capsys):
    commands = [
        ("simulate", "--topology", "fig5a", "--scenario", str(GOLDEN / "scenario_fig5a.json"), "--seed", "11"),
        ("simulate", "--topology", "client_cycle", "--scenario", str(GOLDEN / "scenario_client_cycle.json")),
        ("analyze", "--topology", "fig8b"),
        ("compress", "--topology", "fig8a"),
        ("fuzz", "--topology", "random", "--seeds", "0..9", "--mode", "client_server"),
        ("bounds", "--topology", str(GOLDEN / "triangle.json"), "--m", "1"),
    ]
    differing = [c[0] for c in commands if _cli(*c, hashseed="1") != _cli(*c, hashseed="2") or not _cli(*c, hashseed="1")]
    report(capsys, 8, not differing, f"{len(commands)} commands run twice" + (f", differing: {differing}" if differing else ""))
