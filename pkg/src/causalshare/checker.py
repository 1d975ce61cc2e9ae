"""Trace-level happened-before, causal pasts, and consistency verdicts.

Everything here is computed from trace events plus the topology; no
protocol object is consulted.  Update sets are Python ints used as bitsets,
bit ``n`` standing for the ``n``-th issued update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, Optional

from .protocol import EdgeTimestamp, UpdateId
from .simulator import Trace
from .topology import Topology

Variant = Literal["peer", "client_server"]


class MalformedTrace(ValueError):
    pass


class IncompleteTrace(ValueError):
    pass


def _bits(mask: int) -> Iterable[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class HappenedBefore:
    """``pred[n]`` is the set of updates that happened before update ``n``."""

    variant: Variant
    updates: list[UpdateId]
    registers: list[str]
    timestamps: list[EdgeTimestamp]
    pred: list[int]
    index: dict[UpdateId, int] = field(repr=False)

    def precedes(self, u1: UpdateId, u2: UpdateId) -> bool:
        return bool(self.pred[self.index[u2]] >> self.index[u1] & 1)

    def concurrent(self, u1: UpdateId, u2: UpdateId) -> bool:
        return u1 != u2 and not self.precedes(u1, u2) and not self.precedes(u2, u1)

    def ids(self, mask: int) -> frozenset[UpdateId]:
        return frozenset(self.updates[n] for n in _bits(mask))

    def predecessors(self, u: UpdateId) -> frozenset[UpdateId]:
        return self.ids(self.pred[self.index[u]])

    @property
    def pairs(self) -> frozenset[tuple[UpdateId, UpdateId]]:
        return frozenset((self.updates[a], u) for n, u in enumerate(self.updates) for a in _bits(self.pred[n]))


@dataclass
class _State:
    hb: HappenedBefore
    applied: dict[int, int] = field(default_factory=dict)  # replica -> bitset of applied updates
    past: dict[int, int] = field(default_factory=dict)  # replica -> causal past
    client_past: dict[int, int] = field(default_factory=dict)
    client_required: dict[int, int] = field(default_factory=dict)
    issuers: list[int] = field(default_factory=list)
    clients: list[Optional[int]] = field(default_factory=list)


def _replay(trace: Trace, variant: Variant, visit=None, cut: Optional[int] = None) -> _State:
    """Rebuild happened-before event by event.

    With ``cut`` set, that replica forwards no history: its issues start
    with an empty past and clients learn nothing from it.  This yields the
    relation restricted to causal chains that avoid the replica.
    """
    hb = HappenedBefore(variant, [], [], [], [], {})
    st = _State(hb)
    for ev in trace:
        if ev.kind == "issue":
            if ev.update is None or ev.replica is None or ev.timestamp is None or ev.register is None:
                raise MalformedTrace(f"step {ev.step}: incomplete issue event")
            if ev.update in hb.index:
                raise MalformedTrace(f"step {ev.step}: update {list(ev.update)} issued twice")
            n = len(hb.updates)
            before = st.past.get(ev.replica, 0)
            if variant == "client_server" and ev.client is not None:
                before |= st.client_past.get(ev.client, 0)
            if ev.replica == cut:
                before = 0
            hb.index[ev.update] = n
            hb.updates.append(ev.update)
            hb.registers.append(ev.register)
            hb.timestamps.append(ev.timestamp)
            hb.pred.append(before)
            st.issuers.append(ev.replica)
            st.clients.append(ev.client)
            if visit:
                visit(ev, st)
        elif ev.kind == "apply":
            n = hb.index.get(ev.update) if ev.update is not None else None
            if n is None:
                raise MalformedTrace(f"step {ev.step}: apply of unknown update {ev.update}")
            bit = 1 << n
            if st.applied.get(ev.replica, 0) & bit:
                raise MalformedTrace(f"step {ev.step}: update {list(ev.update)} applied twice at {ev.replica}")
            if visit:
                visit(ev, st)  # visitors see the state just before the apply
            st.applied[ev.replica] = st.applied.get(ev.replica, 0) | bit
            st.past[ev.replica] = st.past.get(ev.replica, 0) | bit | hb.pred[n]
        elif ev.kind == "client_serve":
            if ev.client is None or ev.replica is None:
                raise MalformedTrace(f"step {ev.step}: incomplete client_serve event")
            if visit:
                visit(ev, st)
            if variant == "client_server" and ev.replica != cut:
                seen = st.applied.get(ev.replica, 0)
                st.client_past[ev.client] = st.client_past.get(ev.client, 0) | st.past.get(ev.replica, 0)
                req = st.client_required.get(ev.client, 0)
                for n in _bits(seen):
                    req |= hb.pred[n]
                st.client_required[ev.client] = req
        elif visit:
            visit(ev, st)
    return st


def happened_before(trace: Trace, variant: Variant = "peer") -> HappenedBefore:
    """Least transitively closed relation generated by apply-before-issue (and client sessions)."""
    if variant not in ("peer", "client_server"):
        raise ValueError(f"unknown variant {variant!r}")
    return _replay(trace, variant).hb


def causal_past(trace: Trace, replica: int, at_step: int, variant: Variant = "peer") -> frozenset[UpdateId]:
    """Applied updates at ``replica`` up to and including ``at_step``, closed under predecessors."""
    prefix = Trace([e for e in trace if e.step <= at_step])
    st = _replay(prefix, variant)
    return st.hb.ids(st.past.get(replica, 0))


# --- verdicts ---------------------------------------------------------------------


@dataclass
class Check:
    name: str
    ok: bool = True
    checked: int = 0
    skipped: int = 0
    witness: Optional[dict[str, Any]] = None

    def fail(self, **witness: Any) -> None:
        if self.ok:
            self.ok = False
            self.witness = witness

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "ok": self.ok, "checked": self.checked}
        if self.skipped:
            out["not_applicable"] = self.skipped
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class Verdict:
    safety: Check
    liveness: Check
    invariants: dict[str, Check]

    @property
    def ok(self) -> bool:
        return self.safety.ok and self.liveness.ok and all(c.ok for c in self.invariants.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "safety": self.safety.to_dict(),
            "liveness": self.liveness.to_dict(),
            "invariants": {k: c.to_dict() for k, c in self.invariants.items()},
        }


def _u(hb: HappenedBefore, n: int) -> list[int]:
    return list(hb.updates[n])


def check_safety(trace: Trace, hb: HappenedBefore, topology: Topology) -> Check:
    """No update is applied while a predecessor on a locally stored register is missing.

    In the client-server variant, every serve at replica ``i`` also requires
    that predecessors of whatever the client has seen (on registers of ``i``)
    are already applied at ``i``.
    """
    check = Check("safety")
    local = {r: _register_mask_fn(hb, topology, r) for r in topology.replicas}

    def visit(ev, st: _State) -> None:
        if ev.kind == "apply":
            n = hb.index[ev.update]
            need = hb.pred[n] & local[ev.replica]() & ~st.applied.get(ev.replica, 0)
            check.checked += 1
            if need:
                missing = next(iter(_bits(need)))
                check.fail(step=ev.step, replica=ev.replica, applied=_u(hb, n), missing=_u(hb, missing))
        elif ev.kind == "client_serve" and hb.variant == "client_server":
            need = st.client_required.get(ev.client, 0) & local[ev.replica]() & ~st.applied.get(ev.replica, 0)
            check.checked += 1
            if need:
                missing = next(iter(_bits(need)))
                check.fail(step=ev.step, replica=ev.replica, client=ev.client, missing=_u(hb, missing))

    _replay(trace, hb.variant, visit)
    return check


def _register_mask_fn(hb: HappenedBefore, topology: Topology, replica: int):
    """Lazily extended bitset of updates whose register is stored at ``replica``."""
    regs = topology.replica_registers[replica]
    cache = {"n": 0, "mask": 0}

    def mask() -> int:
        while cache["n"] < len(hb.registers):
            if hb.registers[cache["n"]] in regs:
                cache["mask"] |= 1 << cache["n"]
            cache["n"] += 1
        return cache["mask"]

    return mask


def check_liveness(trace: Trace, topology: Topology, hb: Optional[HappenedBefore] = None) -> Check:
    """Every update reaches every holder and every client request is answered."""
    if not trace.quiescent:
        raise IncompleteTrace("trace has no quiescent marker")
    check = Check("liveness")
    applied: dict[UpdateId, set[int]] = {}
    issued: list[tuple[UpdateId, str]] = []
    outstanding: dict[int, int] = {}
    for ev in trace:
        if ev.kind == "issue":
            issued.append((ev.update, ev.register))
            applied.setdefault(ev.update, set())
        elif ev.kind == "apply":
            applied.setdefault(ev.update, set()).add(ev.replica)
        elif ev.kind == "client_request":
            outstanding[ev.client] = ev.replica
        elif ev.kind == "client_serve":
            outstanding.pop(ev.client, None)
    for uid, x in issued:
        for r in topology.holders(x):
            check.checked += 1
            if r not in applied[uid]:
                check.fail(replica=r, pending=list(uid), register=x)
    for c, r in sorted(outstanding.items()):
        check.checked += 1
        check.fail(client=c, replica=r, reason="request never served")
    return check


def check_monotone(trace: Trace, hb: HappenedBefore, topology: Topology, literal: bool = False) -> Check:
    """Counter monotonicity along causal chains into a receiver.

    For updates ``u'`` (from ``k``) and ``u`` (from ``j``) both sent to ``i``
    with ``u'`` before ``u``: ``T[e_ki] >= T'[e_ki]``, strictly when ``k == j``.
    The induction behind this claim follows chains whose intermediate hops
    avoid ``i``, so by default only such chains are considered.  With
    ``literal=True`` every happened-before pair is checked; chains that pass
    through ``i`` itself can then break the inequality harmlessly (``u'`` is
    already applied at ``i`` by then).  Pairs where ``j`` does not track
    ``e_ki`` are counted as not applicable.
    """
    check = Check("monotone_counters_literal" if literal else "monotone_counters")
    n_updates = len(hb.updates)
    issuer = [u[0] for u in hb.updates]
    for i in topology.replicas:
        regs = topology.replica_registers[i]
        pred = hb.pred if literal else _replay(trace, hb.variant, cut=i).hb.pred
        inbound = [n for n in range(n_updates) if issuer[n] != i and hb.registers[n] in regs]
        inmask = sum(1 << n for n in inbound)
        for n in inbound:
            j = issuer[n]
            T = hb.timestamps[n]
            for m in _bits(pred[n] & inmask):
                k = issuer[m]
                e = (k, i)
                if e not in T:
                    check.skipped += 1
                    continue
                check.checked += 1
                Tp = hb.timestamps[m]
                if not (T[e] > Tp[e] if k == j else T[e] >= Tp[e]):
                    check.fail(receiver=i, later=_u(hb, n), earlier=_u(hb, m), edge=list(e), later_count=T[e], earlier_count=Tp[e])
    return check


def check_invariants(trace: Trace, hb: HappenedBefore, topology: Topology) -> dict[str, Check]:
    """Replay the three invariants behind the safety proof at every applicable point.

    * counter: ``tau_i[e_ji] >= T[e_ji]`` implies the update from ``j`` is applied at ``i``;
    * monotone: see :func:`check_monotone`;
    * apply: every predecessor of a received update on a local register is already applied.
    """
    counter = Check("counter_implies_applied")
    apply_ = Check("predecessors_applied")
    local = {r: _register_mask_fn(hb, topology, r) for r in topology.replicas}
    # per edge (j, i): updates from j destined to i in issue order, and how many are known applied
    inbound: dict[tuple[int, int], list[int]] = {}
    verified: dict[tuple[int, int], int] = {}

    def check_counter(ev, i: int, applied_i: int) -> None:
        for e, v in ev.timestamp.items():
            if e[1] != i:
                continue
            counter.checked += 1
            lst = inbound.get(e, [])
            p = verified.get(e, 0)
            while p < len(lst) and applied_i >> lst[p] & 1:
                p += 1
            verified[e] = p
            if p < len(lst) and hb.timestamps[lst[p]][e] <= v:
                counter.fail(step=ev.step, replica=i, edge=list(e), counter=v, update=_u(hb, lst[p]))

    def visit(ev, st: _State) -> None:
        if ev.kind == "issue":
            n = hb.index[ev.update]
            for i in topology.holders(ev.register):
                if i != ev.replica:
                    inbound.setdefault((ev.replica, i), []).append(n)
        elif ev.kind == "apply":
            i = ev.replica
            n = hb.index[ev.update]
            if ev.timestamp is not None:
                check_counter(ev, i, st.applied.get(i, 0) | 1 << n)
            if hb.updates[n][0] == i:
                return
            apply_.checked += 1
            need = hb.pred[n] & local[i]() & ~st.applied.get(i, 0)
            if need:
                apply_.fail(step=ev.step, replica=i, applied=_u(hb, n), missing=_u(hb, next(iter(_bits(need)))))

    _replay(trace, hb.variant, visit)
    mono = check_monotone(trace, hb, topology)
    return {c.name: c for c in (counter, mono, apply_)}


def verify(trace: Trace, topology: Topology, client_server: bool = False) -> Verdict:
    variant: Variant = "client_server" if client_server else "peer"
    hb = happened_before(trace, variant)
    return Verdict(check_safety(trace, hb, topology), check_liveness(trace, topology, hb), check_invariants(trace, hb, topology))
