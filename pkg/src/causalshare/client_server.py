"""Client-server variant: clients carry timestamps between the replicas they use."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from .protocol import EdgeTimestamp, NotStored, Replica, UpdateMessage
from .topology import Edge, ShareGraph, Topology


class NotAccessible(LookupError):
    pass


class Blocked(RuntimeError):
    """A client request cannot be served yet; the replica is behind the client."""


def predicate_j1_j2(i: int, tau: EdgeTimestamp, mu: EdgeTimestamp) -> bool:
    """The replica has caught up with the client on every edge coming into ``i``."""
    return all(tau[e] >= mu.get(e) for e in tau.index if e[1] == i)


def cs_advance(i: int, tau: EdgeTimestamp, mu: EdgeTimestamp, x: str, graph: ShareGraph) -> EdgeTimestamp:
    if x not in graph.registers(i):
        raise NotStored(x)
    out = {}
    for e, v in tau.items():
        if e[0] == i and x in graph.shared(i, e[1]):
            out[e] = v + 1
        else:
            out[e] = max(v, mu.get(e))
    return tau.replace(out)


def client_merge(mu: EdgeTimestamp, tau: EdgeTimestamp) -> EdgeTimestamp:
    """Entrywise max over the serving replica's edges."""
    return mu.replace({e: v for e, v in tau.items() if v > mu[e]})


@dataclass(frozen=True)
class ClientRequest:
    client: int
    replica: int
    op: str  # "read" | "write"
    register: str
    mu: EdgeTimestamp
    value: Any = None


@dataclass(frozen=True)
class ClientResponse:
    client: int
    replica: int
    op: str
    register: str
    value: Any
    timestamp: EdgeTimestamp
    messages: tuple[UpdateMessage, ...] = ()


@dataclass
class ClientState:
    id: int
    replicas: frozenset[int]
    mu: EdgeTimestamp

    @classmethod
    def create(cls, client: int, topology: Topology, edge_sets: Mapping[int, Iterable[Edge]]) -> "ClientState":
        rs = topology.client_replicas[client]
        index: set[Edge] = set()
        for r in rs:
            index |= set(edge_sets[r])
        return cls(client, frozenset(rs), EdgeTimestamp.zeros(index))

    def choose_replica(self, x: str, topology: Topology, via: Optional[int] = None) -> int:
        """Lowest-numbered accessible replica with a real copy of ``x``, unless ``via`` is given."""
        candidates = [r for r in sorted(self.replicas) if x in topology.real_registers(r)]
        if not candidates:
            raise NotAccessible(f"client {self.id} reaches no replica storing {x!r}")
        if via is None:
            return candidates[0]
        if via not in candidates:
            raise NotAccessible(f"client {self.id} cannot use replica {via} for {x!r}")
        return via

    def request(self, op: str, x: str, topology: Topology, value: Any = None, via: Optional[int] = None) -> ClientRequest:
        r = self.choose_replica(x, topology, via)
        return ClientRequest(self.id, r, op, x, self.mu, value)

    def complete(self, response: ClientResponse) -> None:
        if response.replica not in self.replicas:
            raise NotAccessible(f"client {self.id} cannot access replica {response.replica}")
        self.mu = client_merge(self.mu, response.timestamp)


@dataclass
class CsReplica(Replica):
    """Replica that also serves client requests, gated on the client's timestamp."""

    requests: deque[ClientRequest] = field(init=False, default_factory=deque)

    def can_serve(self, req: ClientRequest) -> bool:
        return predicate_j1_j2(self.id, self.tau, req.mu)

    def serve(self, req: ClientRequest) -> ClientResponse:
        if not self.can_serve(req):
            raise Blocked(f"replica {self.id} is behind client {req.client}")
        self._check_access(req.register)
        if req.op == "read":
            resp = ClientResponse(req.client, self.id, "read", req.register, self.store[req.register], self.tau)
        else:
            self.store[req.register] = req.value
            self.tau = cs_advance(self.id, self.tau, req.mu, req.register, self.graph)
            msgs = self._issue(req.register, req.value, req.client)
            resp = ClientResponse(req.client, self.id, "write", req.register, "ack", self.tau, tuple(msgs))
        self.emit(
            "client_serve",
            replica=self.id,
            client=req.client,
            op=req.op,
            register=req.register,
            value=resp.value,
            timestamp=self.tau,
        )
        return resp

    def submit(self, req: ClientRequest) -> list[ClientResponse]:
        self._check_access(req.register)
        self.requests.append(req)
        return self.serve_ready()

    def serve_ready(self) -> list[ClientResponse]:
        """Serve buffered requests in arrival order while their gate is open."""
        served = []
        progress = True
        while progress:
            progress = False
            for req in list(self.requests):
                if self.can_serve(req):
                    self.requests.remove(req)
                    served.append(self.serve(req))
                    progress = True
                    break
        return served


def client_read(client: ClientState, replicas: Mapping[int, CsReplica], x: str, via: Optional[int] = None) -> Any:
    """Synchronous read; raises Blocked instead of waiting."""
    replica = replicas[client.choose_replica(x, next(iter(replicas.values())).topology, via)]
    resp = replica.serve(ClientRequest(client.id, replica.id, "read", x, client.mu))
    client.complete(resp)
    return resp.value


def client_write(
    client: ClientState, replicas: Mapping[int, CsReplica], x: str, value: Any, via: Optional[int] = None
) -> tuple[str, tuple[UpdateMessage, ...]]:
    replica = replicas[client.choose_replica(x, next(iter(replicas.values())).topology, via)]
    resp = replica.serve(ClientRequest(client.id, replica.id, "write", x, client.mu, value))
    client.complete(resp)
    return resp.value, resp.messages
