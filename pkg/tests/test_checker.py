import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from causalshare.checker import (
    IncompleteTrace,
    check_liveness,
    check_monotone,
    happened_before,
    verify,
)
from causalshare.protocol import MUTANTS
from causalshare.simulator import Event, Scenario, Trace, fuzz, random_operations, random_topology, run_scenario
from conftest import topo

PAIR = topo({1: "x", 2: "x"})


def explicit(t, *ops):
    return run_scenario(Scenario(t, list(ops), "explicit"))


def w(r, x):
    return {"op": "write", "replica": r, "register": x}


def d(u, to):
    return {"op": "deliver", "update": list(u), "to": to}


def hb_oracle(trace: Trace) -> set:
    """Direct reading of the definition: apply-before-issue at one replica, then closure."""
    base = set()
    seen: dict[int, list] = {}
    for e in trace:
        if e.kind == "issue":
            base |= {(u, e.update) for u in seen.get(e.replica, [])}
        if e.kind == "apply":
            seen.setdefault(e.replica, []).append(e.update)
    closed = set(base)
    while True:
        more = {(a, c) for a, b in closed for b2, c in closed if b == b2} - closed
        if not more:
            return closed
        closed |= more


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_happened_before_matches_oracle(seed):
    t = random_topology(random.Random(seed), max_replicas=4, max_registers=4)
    trace = run_scenario(Scenario(t, random_operations(t, random.Random(seed), 2), seed=seed))
    hb = happened_before(trace)
    assert set(hb.pairs) == hb_oracle(trace)
    assert all((b, a) not in hb.pairs for a, b in hb.pairs)


def test_single_update_has_empty_relation():
    assert not happened_before(explicit(PAIR, w(1, "x"))).pairs


def test_empty_trace_passes():
    trace = run_scenario(Scenario(PAIR, []))
    assert verify(trace, PAIR).ok


def test_corrupted_apply_order_is_a_violation():
    trace = explicit(PAIR, w(1, "x"), w(1, "x"), d((1, 1), 2), d((1, 2), 2))
    events = list(trace.events)
    a, b = [n for n, e in enumerate(events) if e.kind == "apply" and e.replica == 2]
    events[a], events[b] = dataclasses.replace(events[a], update=events[b].update), dataclasses.replace(
        events[b], update=events[a].update
    )
    verdict = verify(Trace(events), PAIR)
    assert not verdict.safety.ok
    assert verdict.safety.witness["applied"] == [1, 2]
    assert verdict.safety.witness["missing"] == [1, 1]


def test_buffered_at_end_is_stuck():
    trace = run_scenario(Scenario(PAIR, [w(1, "x")]), strict=False, predicate=lambda *a: False)
    live = check_liveness(trace, PAIR)
    assert not live.ok and live.witness == {"replica": 2, "pending": [1, 1], "register": "x"}


def test_missing_quiescence_marker():
    trace = explicit(PAIR, w(1, "x"))
    with pytest.raises(IncompleteTrace):
        check_liveness(Trace(trace.events[:-1]), PAIR)


def test_same_sender_chain_is_strict():
    t = topo({1: "x", 2: "x"})
    trace = explicit(t, w(1, "x"), w(1, "x"))
    hb = happened_before(trace)
    mono = check_monotone(trace, hb, t)
    assert mono.ok and mono.checked == 1


def test_monotone_only_over_chains_avoiding_receiver():
    # 1 -> 2 -> 3 -> 4 -> 2: the chain into 2 passes through 2 itself
    t = topo({1: ["x2", "x3"], 2: ["x0", "x1", "x3"], 3: ["x0", "x1"], 4: ["x0", "x2", "x4"], 5: ["x2", "x4"]})
    trace = run_scenario(
        Scenario(
            t,
            [
                w(3, "x0"), w(1, "x3"), w(2, "x3"), d((3, 1), 4), d((1, 1), 2),
                w(2, "x1"), d((2, 2), 3), w(3, "x0"), d((3, 2), 4), w(4, "x0"),
            ],
            "explicit",
        )
    )
    hb = happened_before(trace)
    assert hb.precedes((1, 1), (4, 1))
    assert check_monotone(trace, hb, t).ok
    literal = check_monotone(trace, hb, t, literal=True)
    assert literal.witness == {
        "receiver": 2, "later": [4, 1], "earlier": [1, 1], "edge": [1, 2], "later_count": 0, "earlier_count": 1
    }
    assert verify(trace, t).ok


def test_client_read_then_write_depends_on_what_was_read():
    t = topo({1: "x", 2: "xy", 3: "y"}, {1: [2, 3]})
    ops = [
        {"op": "write", "replica": 1, "register": "x", "value": 1},
        d((1, 1), 2),
        {"op": "client_read", "client": 1, "register": "x", "via": 2},
        {"op": "client_write", "client": 1, "register": "y", "value": 2, "via": 3},
    ]
    trace = run_scenario(Scenario(t, ops, "explicit", mode="client_server"))
    assert happened_before(trace, "client_server").precedes((1, 1), (3, 1))
    assert not happened_before(trace, "peer").precedes((1, 1), (3, 1))
    assert verify(trace, t, client_server=True).ok


def test_serve_clause_catches_stale_replica():
    # the client saw u2 at replica 2; a serve at 3 while u2's predecessor u1 is missing there is unsafe
    t = topo({1: "x", 2: "x", 3: "x"}, {1: [2, 3]})
    ops = [
        {"op": "write", "replica": 1, "register": "x", "value": 1},
        {"op": "write", "replica": 1, "register": "x", "value": 2},
        d((1, 1), 2),
        d((1, 2), 2),
        {"op": "client_read", "client": 1, "register": "x", "via": 2},
    ]
    trace = run_scenario(Scenario(t, ops, "explicit", mode="client_server"))
    assert verify(trace, t, client_server=True).ok
    events = [e for e in trace.events if e.kind != "quiescent"]
    late = [e for e in events if e.kind in ("deliver", "apply") and e.replica == 3]
    events = [e for e in events if e not in late]
    events += [
        Event(0, "client_request", replica=3, client=1, op="read", register="x"),
        Event(0, "client_serve", replica=3, client=1, op="read", register="x"),
        *late,
        Event(0, "quiescent"),
    ]
    forged = Trace([dataclasses.replace(e, step=n) for n, e in enumerate(events)])
    verdict = verify(forged, t, client_server=True)
    assert not verdict.safety.ok
    assert verdict.safety.witness["client"] == 1 and verdict.safety.witness["missing"] == [1, 1]
    assert verify(forged, t).safety.ok  # the peer variant has no session clause


@pytest.mark.parametrize("name", sorted(MUTANTS))
def test_mutants_are_caught(name):
    kind, fn = MUTANTS[name]
    t = topo({1: "ab", 2: "ac", 3: "bc"})
    kw = {"predicate": fn} if kind == "predicate" else {"merge_fn": fn}
    results = fuzz(t, range(200), 3, **kw)
    assert any(not r.ok for r in results)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_engine_traces_pass(seed):
    t = random_topology(random.Random(seed), max_replicas=5)
    trace = run_scenario(Scenario(t, random_operations(t, random.Random(seed), 3), seed=seed))
    verdict = verify(trace, t)
    assert verdict.ok, verdict.to_dict()
