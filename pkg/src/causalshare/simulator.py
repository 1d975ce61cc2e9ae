"""Deterministic event-driven runs over reliable, non-FIFO channels.

The adversary is a seeded ``random.Random``: at every logical step it either
issues the next scripted operation or delivers one in-flight message chosen
uniformly.  Once the operations are exhausted, the quiescence phase drains the
network in seeded order and a ``quiescent`` marker closes the trace.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Literal, Optional

from .client_server import ClientRequest, ClientResponse, ClientState, CsReplica
from .graph_analysis import all_augmented_timestamp_graphs, all_timestamp_graphs
from .protocol import EdgeTimestamp, Merge, Predicate, Replica, UpdateMessage, merge, predicate_j
from .topology import Topology, build_augmented_share_graph, build_share_graph

Mode = Literal["peer", "client_server"]

EVENT_FIELDS = (
    "step",
    "kind",
    "replica",
    "client",
    "peer",
    "op",
    "update",
    "register",
    "value",
    "metadata_only",
    "timestamp",
)


class ScenarioError(ValueError):
    pass


class StuckExecution(RuntimeError):
    def __init__(self, message: str, trace: "Trace") -> None:
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Event:
    step: int
    kind: str
    replica: Optional[int] = None
    client: Optional[int] = None
    peer: Optional[int] = None
    op: Optional[str] = None
    update: Optional[tuple[int, int]] = None
    register: Optional[str] = None
    value: Any = None
    metadata_only: Optional[bool] = None
    timestamp: Optional[EdgeTimestamp] = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in EVENT_FIELDS:
            v = getattr(self, name)
            if v is None:
                continue
            if name == "timestamp":
                v = v.to_json()
            elif name == "update":
                v = list(v)
            out[name] = v
        return out

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "Event":
        kw = {k: d[k] for k in EVENT_FIELDS if k in d}
        if "update" in kw:
            kw["update"] = tuple(kw["update"])
        if "timestamp" in kw:
            kw["timestamp"] = EdgeTimestamp.from_json(kw["timestamp"])
        return cls(**kw)


@dataclass
class Trace:
    events: list[Event] = field(default_factory=list)

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    @property
    def quiescent(self) -> bool:
        return bool(self.events) and self.events[-1].kind == "quiescent"

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), separators=(",", ":")) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        events = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                events.append(Event.from_json(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"trace line {n}: {exc}") from None
        return cls(events)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path: str | Path) -> "Trace":
        return cls.from_jsonl(Path(path).read_text())


@dataclass
class Scenario:
    """Scripted operations plus a delivery policy.

    Operations are dicts such as ``{"op": "write", "replica": 1, "register":
    "x", "value": 7}``, ``{"op": "read", ...}``, ``{"op": "client_write",
    "client": 1, "register": "x", "value": 3, "via": 2}``, ``{"op":
    "client_read", ...}`` and, for explicit delivery, ``{"op": "deliver",
    "update": [1, 1], "to": 2}``.
    """

    topology: Topology
    operations: list[dict[str, Any]] = field(default_factory=list)
    delivery: Literal["random", "explicit"] = "random"
    seed: int = 0
    mode: Mode = "peer"

    @classmethod
    def from_dict(cls, topology: Topology, doc: dict[str, Any]) -> "Scenario":
        return cls(
            topology,
            list(doc.get("operations", [])),
            doc.get("delivery", "random"),
            int(doc.get("seed", 0)),
            doc.get("mode", "peer"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode, "delivery": self.delivery, "seed": self.seed, "operations": self.operations}


class Simulation:
    """One run of the replicated system; owns every replica, client and channel."""

    def __init__(
        self,
        topology: Topology,
        mode: Mode = "peer",
        seed: int = 0,
        predicate: Predicate = predicate_j,
        merge_fn: Merge = merge,
    ) -> None:
        if mode not in ("peer", "client_server"):
            raise ScenarioError(f"unknown mode {mode!r}")
        self.topology = topology
        self.mode = mode
        self.rng = random.Random(seed)
        self.graph = build_share_graph(topology)
        self.trace = Trace()
        if mode == "peer":
            tsgs = all_timestamp_graphs(self.graph)
            cls: type[Replica] = Replica
        else:
            tsgs = all_augmented_timestamp_graphs(build_augmented_share_graph(topology))
            cls = CsReplica
        self.edge_sets = {i: tsgs[i].edges for i in self.graph.vertices}
        self.replicas = {
            i: cls(i, topology, self.graph, self.edge_sets[i], emit=self._emit, predicate=predicate, merge_fn=merge_fn)
            for i in self.graph.vertices
        }
        self.clients: dict[int, ClientState] = {}
        if mode == "client_server":
            self.clients = {c: ClientState.create(c, topology, self.edge_sets) for c in topology.clients}
        self.network: list[UpdateMessage] = []
        self.blocked: dict[int, ClientRequest] = {}
        self.reads: list[tuple[str, Any]] = []

    def _emit(self, kind: str, **fields: Any) -> None:
        self.trace.events.append(Event(len(self.trace.events), kind, **fields))

    # --- operations -------------------------------------------------------

    def entity_blocked(self, op: dict[str, Any]) -> bool:
        return op.get("op", "").startswith("client_") and op.get("client") in self.blocked

    def execute(self, op: dict[str, Any]) -> None:
        kind = op.get("op")
        if kind == "write":
            _, msgs = self.replicas[op["replica"]].handle_write(op["register"], op.get("value"))
            self.network.extend(msgs)
        elif kind == "read":
            self.reads.append((op["register"], self.replicas[op["replica"]].handle_read(op["register"])))
        elif kind in ("client_write", "client_read"):
            if self.mode != "client_server":
                raise ScenarioError("client operations need mode 'client_server'")
            client = self.clients.get(op["client"])
            if client is None:
                raise ScenarioError(f"unknown client {op['client']}")
            if client.id in self.blocked:
                raise ScenarioError(f"client {client.id} already has an outstanding request")
            req = client.request(kind[len("client_"):], op["register"], self.topology, op.get("value"), op.get("via"))
            self._emit("client_request", replica=req.replica, client=req.client, op=req.op, register=req.register)
            self.blocked[client.id] = req
            replica = self.replicas[req.replica]
            self._finish(replica.submit(req))
            if client.id in self.blocked:
                self._emit("buffer", replica=req.replica, client=req.client, op=req.op)
        elif kind == "deliver":
            self.deliver(self._find_message(op))
        else:
            raise ScenarioError(f"unknown operation {op!r}")

    def _find_message(self, op: dict[str, Any]) -> UpdateMessage:
        uid = tuple(op["update"])
        for msg in self.network:
            if msg.update_id == uid and msg.recipient == op["to"]:
                return msg
        raise ScenarioError(f"no in-flight message {list(uid)} to replica {op['to']}")

    def deliver(self, msg: UpdateMessage) -> None:
        self.network.remove(msg)
        replica = self.replicas[msg.recipient]
        applied = replica.receive_update(msg)
        if applied and isinstance(replica, CsReplica):
            self._finish(replica.serve_ready())

    def _finish(self, responses: Iterable[ClientResponse]) -> None:
        for resp in responses:
            self.network.extend(resp.messages)
            self.clients[resp.client].complete(resp)
            del self.blocked[resp.client]

    # --- driving ----------------------------------------------------------

    def run(self, operations: Iterable[dict[str, Any]], delivery: str = "random", p_issue: float = 0.5) -> Trace:
        ops = deque(operations)
        validate_operations(self.topology, ops, self.mode)
        if delivery == "explicit":
            while ops:
                op = ops.popleft()
                if self.entity_blocked(op):
                    raise ScenarioError(f"client {op['client']} is still waiting on its previous request")
                self.execute(op)
        elif delivery == "random":
            while ops:
                can_issue = not self.entity_blocked(ops[0])
                if can_issue and (not self.network or self.rng.random() < p_issue):
                    self.execute(ops.popleft())
                elif self.network:
                    self.deliver(self.network[self.rng.randrange(len(self.network))])
                else:
                    break
        else:
            raise ScenarioError(f"unknown delivery policy {delivery!r}")
        self.quiesce()
        self.unfinished = list(ops)
        return self.trace

    def quiesce(self) -> None:
        while self.network:
            self.deliver(self.network[self.rng.randrange(len(self.network))])
        self._emit("quiescent")

    def stuck(self) -> list[str]:
        problems = []
        for r in self.replicas.values():
            for msg in r.pending.values():
                problems.append(f"replica {r.id} still buffers update {list(msg.update_id)}")
        for c, req in self.blocked.items():
            problems.append(f"client {c} still waits on replica {req.replica}")
        for op in getattr(self, "unfinished", []):
            problems.append(f"operation never issued: {op}")
        return problems


def validate_operations(topology: Topology, ops: Iterable[dict[str, Any]], mode: Mode = "peer") -> None:
    """Reject operations that name unknown entities or registers they cannot reach."""
    for n, op in enumerate(ops, 1):
        kind = op.get("op") if isinstance(op, dict) else None
        try:
            if kind in ("write", "read"):
                r, x = op["replica"], op["register"]
                if r not in topology.replica_registers:
                    raise ScenarioError(f"unknown replica {r}")
                if x not in topology.real_registers(r):
                    raise ScenarioError(f"replica {r} does not store {x!r}")
            elif kind in ("client_write", "client_read"):
                if mode != "client_server":
                    raise ScenarioError("client operations need mode 'client_server'")
                c, x = op["client"], op["register"]
                if c not in topology.client_replicas:
                    raise ScenarioError(f"unknown client {c}")
                if x not in topology.client_registers(c):
                    raise ScenarioError(f"client {c} cannot reach register {x!r}")
                via = op.get("via")
                if via is not None and (via not in topology.client_replicas[c] or x not in topology.real_registers(via)):
                    raise ScenarioError(f"client {c} cannot access {x!r} through replica {via}")
            elif kind == "deliver":
                if len(op["update"]) != 2 or op["to"] not in topology.replica_registers:
                    raise ScenarioError("deliver needs an update [issuer, seq] and a known replica 'to'")
            else:
                raise ScenarioError(f"unknown operation kind {kind!r}")
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"operation {n}: missing or malformed field {exc}") from None
        except ScenarioError as exc:
            raise ScenarioError(f"operation {n}: {exc}") from None


def run_scenario(
    scenario: Scenario,
    strict: bool = True,
    predicate: Predicate = predicate_j,
    merge_fn: Merge = merge,
) -> Trace:
    """Execute ``scenario`` to quiescence; raise StuckExecution when ``strict`` and anything is left over."""
    sim = Simulation(scenario.topology, scenario.mode, scenario.seed, predicate, merge_fn)
    trace = sim.run(scenario.operations, scenario.delivery)
    problems = sim.stuck()
    if problems and strict:
        raise StuckExecution("; ".join(problems), trace)
    return trace


# --- fuzzing ----------------------------------------------------------------------


def random_operations(topology: Topology, rng: random.Random, m: int, mode: Mode = "peer") -> list[dict[str, Any]]:
    """``m`` writes per replica (or ``m`` requests per client), shuffled together."""
    ops: list[dict[str, Any]] = []
    if mode == "client_server" and topology.clients:
        for c in topology.clients:
            regs = sorted(topology.client_registers(c))
            for _ in range(m):
                x = rng.choice(regs)
                via = rng.choice([r for r in sorted(topology.client_replicas[c]) if x in topology.real_registers(r)])
                kind = "client_write" if rng.random() < 0.7 else "client_read"
                ops.append({"op": kind, "client": c, "register": x, "via": via})
    else:
        for r in topology.replicas:
            regs = sorted(topology.real_registers(r))
            if not regs:
                continue
            for _ in range(m):
                ops.append({"op": "write", "replica": r, "register": rng.choice(regs)})
    rng.shuffle(ops)
    for n, op in enumerate(ops, 1):
        if op["op"] in ("write", "client_write"):
            op["value"] = n
    return ops


def random_topology(
    rng: random.Random,
    max_replicas: int = 6,
    max_registers: int = 8,
    max_clients: int = 0,
    min_replicas: int = 2,
) -> Topology:
    """A random placement; every register gets between one and R holders."""
    n = rng.randint(min_replicas, max_replicas)
    k = rng.randint(1, max_registers)
    regs: dict[int, set[str]] = {r: set() for r in range(1, n + 1)}
    for x in range(k):
        size = min(n, rng.choice([1, 2, 2, 2, 3, 3, n]))
        for r in rng.sample(range(1, n + 1), size):
            regs[r].add(f"x{x}")
    pool = [r for r in regs if regs[r]]
    clients = {}
    for c in range(1, rng.randint(1, max_clients) + 1 if max_clients else 1):
        clients[c] = frozenset(rng.sample(pool, rng.randint(1, min(3, len(pool)))))
    return Topology({r: frozenset(xs) for r, xs in regs.items()}, clients)


@dataclass
class FuzzResult:
    seed: int
    trace: Trace
    verdict: Any

    @property
    def ok(self) -> bool:
        return self.verdict.ok


def fuzz_one(
    topology: Topology,
    seed: int,
    m: int,
    mode: Mode = "peer",
    predicate: Predicate = predicate_j,
    merge_fn: Merge = merge,
) -> FuzzResult:
    from .checker import verify

    rng = random.Random(seed)
    ops = random_operations(topology, rng, m, mode)
    scenario = Scenario(topology, ops, "random", seed, mode)
    trace = run_scenario(scenario, strict=False, predicate=predicate, merge_fn=merge_fn)
    return FuzzResult(seed, trace, verify(trace, topology, client_server=mode == "client_server"))


def fuzz(
    topology: Topology,
    seeds: Iterable[int],
    m: int,
    mode: Mode = "peer",
    predicate: Predicate = predicate_j,
    merge_fn: Merge = merge,
    on_result: Optional[Callable[[FuzzResult], None]] = None,
) -> list[FuzzResult]:
    if m < 1:
        raise ValueError("m must be at least 1")
    results = []
    for seed in seeds:
        res = fuzz_one(topology, seed, m, mode, predicate, merge_fn)
        if on_result:
            on_result(res)
        results.append(res)
    return results
