"""Command-line entry point.

Exit codes: 0 on success or a passing verdict, 1 on a verdict violation,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .bounds import ExplosionGuard, bound_report
from .checker import MalformedTrace, verify
from .graph_analysis import all_augmented_timestamp_graphs, all_timestamp_graphs, compare_conditions
from .optimization import (
    compression_plan,
    dummy_report,
    false_dependency_report,
    register_level_counts,
    size_report,
)
from .simulator import Scenario, ScenarioError, Simulation, Trace, fuzz_one, random_topology
from .topology import (
    InvalidTopology,
    Topology,
    build_augmented_share_graph,
    build_share_graph,
    load_topology,
    parse_topology,
)

WORKERS_ENV = "CAUSALSHARE_WORKERS"
FIXTURES = ("fig3", "fig5a", "fig8a", "fig8b", "client_cycle")


class ConfigError(Exception):
    pass


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def fixture_text(name: str) -> str:
    return resources.files("causalshare.fixtures").joinpath(f"{name}.json").read_text()


def resolve_topology(source: str) -> Topology:
    """A path to a topology file, or the name of a bundled fixture."""
    path = Path(source)
    if path.exists():
        return load_topology(path)
    if source in FIXTURES:
        return parse_topology(fixture_text(source))
    raise ConfigError(f"topology {source!r} is neither a file nor a bundled fixture ({', '.join(FIXTURES)})")


def parse_seeds(text: str) -> list[int]:
    """``7``, ``0..99`` (inclusive) or ``1,4,9``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}; use N, A..B or A,B,C") from None


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


# --- subcommands ------------------------------------------------------------------


def analysis_report(topology: Topology, augmented: bool = False) -> dict[str, Any]:
    graph = build_share_graph(topology)
    if augmented:
        tsgs = all_augmented_timestamp_graphs(build_augmented_share_graph(topology))
    else:
        tsgs = all_timestamp_graphs(graph)
    replicas = []
    for i, tsg in tsgs.items():
        replicas.append(
            {
                "replica": i,
                "size": len(tsg),
                "edges": [list(e) for e in tsg.edges],
                "loops": {f"{a}->{b}": loop.to_list() for (a, b), loop in sorted(tsg.witnesses.items())},
            }
        )
    return {
        "topology": topology.to_dict(),
        "augmented": augmented,
        "share_graph": {
            "edges": [list(e) for e in graph.edges],
            "registers": {f"{a}->{b}": sorted(graph.shared(a, b)) for a, b in graph.edges},
        },
        "timestamp_graphs": replicas,
        "comparison": compare_conditions(graph).to_dict(),
    }


def cmd_analyze(args: argparse.Namespace) -> int:
    topology = resolve_topology(args.topology)
    if args.augmented and not topology.clients:
        raise ConfigError("--augmented needs clients in the topology")
    print(dumps(analysis_report(topology, args.augmented)))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    graph = build_share_graph(resolve_topology(args.topology))
    print(dumps(compare_conditions(graph).to_dict()))
    return 0


def _mode(args: argparse.Namespace, topology: Topology) -> str:
    if args.mode == "client_server" and not topology.clients:
        raise ConfigError("mode client_server needs clients in the topology")
    return args.mode


def cmd_simulate(args: argparse.Namespace) -> int:
    topology = resolve_topology(args.topology)
    try:
        doc = json.loads(Path(args.scenario).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {args.scenario}: {exc}") from None
    scenario = Scenario.from_dict(topology, doc)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.mode is not None:
        scenario.mode = args.mode
    if scenario.mode == "client_server" and not topology.clients:
        raise ConfigError("mode client_server needs clients in the topology")
    sim = Simulation(topology, scenario.mode, scenario.seed)
    trace = sim.run(scenario.operations, scenario.delivery)
    if args.trace:
        trace.save(args.trace)
    else:
        sys.stdout.write(trace.to_jsonl())
    problems = sim.stuck()
    for p in problems:
        print(f"stuck: {p}", file=sys.stderr)
    return 1 if problems else 0


def cmd_check(args: argparse.Namespace) -> int:
    topology = resolve_topology(args.topology)
    try:
        trace = Trace.load(args.trace)
    except OSError as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc}") from None
    verdict = verify(trace, topology, client_server=args.client_server)
    print(dumps(verdict.to_dict()))
    return 0 if verdict.ok else 1


def _fuzz_task(task: tuple[Optional[dict[str, Any]], int, int, str, int]) -> dict[str, Any]:
    doc, seed, m, mode, max_clients = task
    if doc is None:
        topology = random_topology(random.Random(seed), max_clients=max_clients if mode == "client_server" else 0)
    else:
        topology = Topology(
            {int(r["id"]): frozenset(r["registers"]) for r in doc["replicas"]},
            {int(c["id"]): frozenset(c["replicas"]) for c in doc["clients"]},
            frozenset((r, x) for r, x in doc["dummies"]),
        )
    res = fuzz_one(topology, seed, m, mode)  # type: ignore[arg-type]
    out = {"seed": seed, "ok": res.ok, "events": len(res.trace)}
    if doc is None:
        out["topology"] = topology.to_dict()
    if not res.ok:
        out["verdict"] = res.verdict.to_dict()
    return out


def cmd_fuzz(args: argparse.Namespace) -> int:
    if args.m < 1:
        raise ConfigError("--m must be at least 1")
    doc = None
    if args.topology != "random":
        topology = resolve_topology(args.topology)
        _mode(args, topology)
        doc = topology.to_dict()
    tasks = [(doc, seed, args.m, args.mode, args.max_clients) for seed in args.seeds]
    workers = args.workers or default_workers()
    if workers > 1 and len(tasks) > 1:
        from multiprocessing import Pool

        with Pool(workers) as pool:
            results = pool.map(_fuzz_task, tasks)
    else:
        results = [_fuzz_task(t) for t in tasks]
    for r in results:
        print(f"seed {r['seed']}: {'pass' if r['ok'] else 'FAIL'}")
    failed = [r for r in results if not r["ok"]]
    summary = {"runs": len(results), "passed": len(results) - len(failed), "failed": failed}
    print(dumps(summary))
    return 1 if failed else 0


def cmd_compress(args: argparse.Namespace) -> int:
    topology = resolve_topology(args.topology)
    graph = build_share_graph(topology)
    plans = {i: compression_plan(graph, t) for i, t in all_timestamp_graphs(graph).items()}
    doc = {
        "sizes": size_report(topology),
        "plans": [p.to_dict() for p in plans.values()],
        "register_counters": [register_level_counts(p) for p in plans.values()],
    }
    print(dumps(doc))
    return 0


def cmd_dummies(args: argparse.Namespace) -> int:
    topology = resolve_topology(args.topology)
    doc = dummy_report(topology, args.target)
    if args.false_deps:
        doc["false_dependencies"] = false_dependency_report(topology, args.target, args.seeds, args.m)
    print(dumps(doc))
    return 0


def cmd_bounds(args: argparse.Namespace) -> int:
    topology = resolve_topology(args.topology)
    graph = build_share_graph(topology)
    replicas = [args.replica] if args.replica is not None else list(topology.replicas)
    for i in replicas:
        if i not in topology.replicas:
            raise ConfigError(f"unknown replica {i}")
    reports = [bound_report(graph, i, args.m, force=args.force, cap=args.cap) for i in replicas]
    print(dumps([r.to_dict() for r in reports]))
    return 0 if all(r.holds for r in reports) else 1


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalshare", description="Causal consistency for partially replicated registers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def topo(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--topology", required=True, help="topology JSON file or fixture name")

    sp = sub.add_parser("analyze", help="timestamp graphs, witnessing loops and the hoop comparison")
    topo(sp)
    sp.add_argument("--augmented", action="store_true", help="use client-augmented timestamp graphs")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("compare", help="timestamp graph against both hoop rules")
    topo(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("simulate", help="run a scenario and emit its trace as JSON Lines")
    topo(sp)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=["peer", "client_server"])
    sp.add_argument("--trace", help="write the trace here instead of stdout")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check", help="verify safety, liveness and invariants of a trace")
    topo(sp)
    sp.add_argument("--trace", required=True)
    sp.add_argument("--client-server", action="store_true")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("fuzz", help="random schedules checked by the trace checker")
    sp.add_argument("--topology", required=True, help="topology file, fixture name, or 'random' (one per seed)")
    sp.add_argument("--seeds", type=parse_seeds, default=list(range(10)))
    sp.add_argument("--m", type=int, default=3, help="updates per replica (or requests per client)")
    sp.add_argument("--mode", choices=["peer", "client_server"], default="peer")
    sp.add_argument("--max-clients", type=int, default=3)
    sp.add_argument("--workers", type=int, help=f"parallel workers (default from {WORKERS_ENV}, else 1)")
    sp.set_defaults(func=cmd_fuzz)

    sp = sub.add_parser("compress", help="edge bases and register-level counters")
    topo(sp)
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("dummies", help="dummy-register plan and resulting sizes")
    topo(sp)
    sp.add_argument("--target", choices=["full", "selective"], default="full")
    sp.add_argument("--false-deps", action="store_true", help="also measure buffering with and without dummies")
    sp.add_argument("--seeds", type=parse_seeds, default=list(range(20)))
    sp.add_argument("--m", type=int, default=3)
    sp.set_defaults(func=cmd_dummies)

    sp = sub.add_parser("bounds", help="conflict-graph colouring against realized timestamps")
    topo(sp)
    sp.add_argument("--replica", type=int)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--force", action="store_true", help="allow instances beyond R<=3, m<=2")
    sp.add_argument("--cap", type=int, default=64, help="largest conflict component to colour exactly")
    sp.set_defaults(func=cmd_bounds)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidTopology, ScenarioError, MalformedTrace, ExplosionGuard) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
