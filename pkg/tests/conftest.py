from __future__ import annotations

from pathlib import Path

import pytest

from causalshare.cli import fixture_text
from causalshare.topology import Topology, parse_topology

GOLDEN = Path(__file__).parent / "golden"


def topo(regs: dict[int, str], clients: dict[int, list[int]] | None = None) -> Topology:
    """Terse topology builder: ``{1: "xy", 2: "y"}`` means X_1={x,y}, X_2={y}."""
    return Topology({r: frozenset(xs) for r, xs in regs.items()}, {c: frozenset(rs) for c, rs in (clients or {}).items()})


def fixture(name: str) -> Topology:
    return parse_topology(fixture_text(name))


@pytest.fixture
def fig5a() -> Topology:
    return fixture("fig5a")
