import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalshare.graph_analysis import (
    NotASimpleLoop,
    SimpleLoop,
    all_augmented_timestamp_graphs,
    all_timestamp_graphs,
    augmented_is_loop,
    augmented_timestamp_graph,
    compare_conditions,
    find_hoops,
    is_loop,
    is_minimal_hoop,
    simple_cycles_through,
    timestamp_graph,
)
from causalshare.topology import Topology, build_augmented_share_graph, build_share_graph
from conftest import fixture, topo


def split(seq: tuple[int, ...], edge: tuple[int, int]) -> SimpleLoop:
    """``(i, l_1..l_s=k, j=r_1..r_t)`` cut at the hop from ``l_s`` to ``r_1``."""
    s = seq.index(edge[1])
    return SimpleLoop(seq[0], tuple(seq[1 : s + 1]), tuple(seq[s + 1 :]))


# --- brute-force oracle: enumerate every vertex sequence and apply the loop conditions literally


def oracle_edges(regs: dict[int, frozenset[str]], i: int) -> set[tuple[int, int]]:
    X = regs
    V = sorted(X)

    def adj(a, b):
        return a != b and bool(X[a] & X[b])

    out = {(a, b) for a in V for b in V if adj(a, b) and i in (a, b)}
    others = [v for v in V if v != i]
    for j, k in itertools.permutations(others, 2):
        if not adj(j, k):
            continue
        rest = [v for v in others if v not in (j, k)]
        for n in range(len(rest) + 1):
            for mid in itertools.permutations(rest, n):
                for cut in range(n + 1):
                    ls = list(mid[:cut]) + [k]  # l_1..l_s
                    rs = [j] + list(mid[cut:]) + [i]  # r_1..r_t, r_{t+1}=i
                    ring = [i] + ls + rs
                    if not all(adj(a, b) for a, b in zip(ring, ring[1:])):
                        continue
                    inner = set().union(*(X[l] for l in ls[:-1]))
                    every_l = set().union(*(X[l] for l in ls))
                    t = len(rs) - 1
                    ok = bool((X[j] & X[k]) - inner)
                    ok = ok and bool((X[j] & X[rs[1]]) - inner)
                    ok = ok and all((X[rs[q]] & X[rs[q + 1]]) - every_l for q in range(1, t))
                    if ok:
                        out.add((j, k))
    return out


placements = st.lists(st.frozensets(st.sampled_from("abcdef"), min_size=1), min_size=2, max_size=5).map(
    lambda xs: {n: x for n, x in enumerate(xs, 1)}
)


@settings(max_examples=150, deadline=None)
@given(placements)
def test_timestamp_graph_matches_oracle(regs):
    g = build_share_graph(Topology(regs))
    for i in g.vertices:
        assert set(timestamp_graph(g, i).edges) == oracle_edges(regs, i)


def test_oracle_on_fig5a():
    t = fixture("fig5a")
    for i in t.replicas:
        assert set(timestamp_graph(build_share_graph(t), i).edges) == oracle_edges(dict(t.replica_registers), i)


# --- Fig 5a verdicts


def test_fig5a_timestamp_graph_of_1(fig5a):
    E1 = timestamp_graph(build_share_graph(fig5a), 1)
    assert (4, 3) in E1 and (3, 4) not in E1


def test_fig5a_loop_verdicts(fig5a):
    g = build_share_graph(fig5a)
    assert is_loop(g, split((1, 2, 3, 4), (4, 3)), (4, 3))
    assert is_loop(g, split((1, 2, 3, 4), (3, 2)), (3, 2))
    assert not is_loop(g, split((1, 4, 3, 2), (3, 4)), (3, 4))
    assert not is_loop(g, split((1, 4, 3, 2), (2, 3)), (2, 3))


def test_non_loop_shape_rejected(fig5a):
    g = build_share_graph(fig5a)
    with pytest.raises(NotASimpleLoop):
        is_loop(g, SimpleLoop(1, (3,), (2,)), (2, 3))  # 1 and 3 share nothing


# --- structural sizes


def test_incident_edges_always_tracked():
    g = build_share_graph(fixture("fig8a"))
    for i, tsg in all_timestamp_graphs(g).items():
        assert set(g.incident(i)) <= tsg.edge_set


def test_full_replication_clique():
    for R in (3, 4, 5):
        g = build_share_graph(Topology({r: frozenset("xy") for r in range(1, R + 1)}))
        assert all(len(t) == R * (R - 1) for t in all_timestamp_graphs(g).values())


def test_cycle_with_unique_registers():
    for n in (3, 4, 5, 6):
        regs = {r: frozenset({f"e{r}", f"e{r % n + 1}"}) for r in range(1, n + 1)}
        g = build_share_graph(Topology(regs))
        assert all(len(t) == 2 * n for t in all_timestamp_graphs(g).values())


def test_tree_tracks_only_incident_edges():
    g = build_share_graph(topo({1: "ab", 2: "a", 3: "bc", 4: "c"}))
    for i, tsg in all_timestamp_graphs(g).items():
        assert set(tsg.edges) == set(g.incident(i))


def test_simple_cycles_are_rooted_and_simple(fig5a):
    g = build_share_graph(fig5a)
    cycles = list(simple_cycles_through(g, 1))
    assert cycles and all(c[0] == 1 and len(set(c)) == len(c) >= 3 for c in cycles)
    assert (1, 2, 3, 4) in cycles and (1, 4, 3, 2) in cycles


# --- augmented graphs


def test_augmented_no_clients_equals_plain(fig5a):
    ag = build_augmented_share_graph(fig5a)
    g = build_share_graph(fig5a)
    for i in g.vertices:
        assert augmented_timestamp_graph(ag, i).edges == timestamp_graph(g, i).edges


def test_client_edge_closes_a_loop():
    t = fixture("client_cycle")
    ag = build_augmented_share_graph(t)
    assert (3, 2) not in timestamp_graph(ag.base, 1)
    assert augmented_is_loop(ag, SimpleLoop(1, (2,), (3,)), (3, 2))
    E1 = augmented_timestamp_graph(ag, 1)
    assert (3, 2) in E1
    assert (1, 3) not in E1 and (3, 1) not in E1  # client-only edges never tracked


def test_client_pair_without_cycle_adds_nothing():
    t = topo({1: "x", 2: "x", 3: "y", 4: "y"}, {1: [2, 3]})
    hat = all_augmented_timestamp_graphs(build_augmented_share_graph(t))
    assert set(hat[1].edges) == {(1, 2), (2, 1)}


def test_co_assigned_pair_satisfies_condition_ii():
    # 3 and 4 share nothing; only the client joins them into the cycle 1-2-3-4
    t = topo({1: "ad", 2: "ab", 3: "b", 4: "d"}, {1: [3, 4]})
    ag = build_augmented_share_graph(t)
    assert augmented_is_loop(ag, SimpleLoop(1, (2,), (3, 4)), (3, 2))
    assert (3, 2) in augmented_timestamp_graph(ag, 1)
    assert (3, 2) not in timestamp_graph(ag.base, 1)


def test_empty_residual_hop_needs_common_client():
    # hop 4->1 carries only d, which l_1 = 2 also stores
    regs = {1: "ad", 2: "abd", 3: "bc", 4: "cd"}
    loop = SimpleLoop(1, (2,), (3, 4))
    assert not is_loop(build_share_graph(topo(regs)), loop, (3, 2))
    assert not augmented_is_loop(build_augmented_share_graph(topo(regs, {1: [2, 3]})), loop, (3, 2))
    assert augmented_is_loop(build_augmented_share_graph(topo(regs, {1: [1, 4]})), loop, (3, 2))


@settings(max_examples=60, deadline=None)
@given(placements, st.data())
def test_augmented_is_superset_within_base(regs, data):
    t = Topology(regs)
    rs = data.draw(st.frozensets(st.sampled_from(t.replicas), min_size=2))
    t = Topology(regs, {1: rs})
    g = build_share_graph(t)
    ag = build_augmented_share_graph(t)
    for i in t.replicas:
        plain, hat = set(timestamp_graph(g, i).edges), set(augmented_timestamp_graph(ag, i).edges)
        assert plain <= hat <= g.edge_set


# --- hoops and the hoop-rule comparison


def test_fig8a_original_rule_overdemands():
    rep = compare_conditions(build_share_graph(fixture("fig8a")))
    # i=1, k=4, j=5
    for e in [(4, 5), (5, 4)]:
        row = rep.row(1, e)
        assert row.original_hoop and not row.timestamp_graph and row.disagreement


def test_fig8b_modified_rule_underdemands():
    rep = compare_conditions(build_share_graph(fixture("fig8b")))
    row = rep.row(1, (4, 5))
    assert row.timestamp_graph and not row.modified_hoop and row.disagreement


def test_fig8a_hoop_is_minimal_only_originally():
    g = build_share_graph(fixture("fig8a"))
    hoop = next(h for h in find_hoops(g, "x") if h.path == (4, 3, 2, 1, 7, 6, 5) or h.path == (5, 6, 7, 1, 2, 3, 4))
    assert is_minimal_hoop(g, hoop, "original")
    assert not is_minimal_hoop(g, hoop, "modified")


def test_hoops_avoid_the_register_inside():
    g = build_share_graph(fixture("fig8b"))
    for x in ["x", "y"]:
        for h in find_hoops(g, x):
            assert all(x not in g.registers(v) for v in h.interior)
            assert x in g.registers(h.ends[0]) and x in g.registers(h.ends[1])


def test_compare_is_deterministic():
    g = build_share_graph(fixture("fig8b"))
    assert compare_conditions(g).to_dict() == compare_conditions(g).to_dict()
