import json
import subprocess
import sys

import pytest

from causalshare.cli import FIXTURES, main, parse_seeds
from causalshare.simulator import Trace
from conftest import GOLDEN


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("name", FIXTURES)
def test_analyze_and_compress_match_golden(capsys, name):
    for cmd in ("analyze", "compress"):
        code, out, _ = run(capsys, cmd, "--topology", name)
        assert code == 0
        assert out == (GOLDEN / f"{cmd}_{name}.json").read_text()


def test_augmented_golden(capsys):
    code, out, _ = run(capsys, "analyze", "--topology", "client_cycle", "--augmented")
    assert code == 0 and out == (GOLDEN / "analyze_client_cycle_augmented.json").read_text()
    assert run(capsys, "analyze", "--topology", "fig3", "--augmented")[0] == 2


def test_analyze_fig5a_verdicts(capsys):
    _, out, _ = run(capsys, "analyze", "--topology", "fig5a")
    doc = json.loads(out)
    e1 = next(r for r in doc["timestamp_graphs"] if r["replica"] == 1)
    assert [4, 3] in e1["edges"] and [3, 4] not in e1["edges"]


def test_simulate_golden_and_check(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    scenario = str(GOLDEN / "scenario_fig3.json")
    assert run(capsys, "simulate", "--topology", "fig3", "--scenario", scenario, "--trace", str(trace))[0] == 0
    assert trace.read_text() == (GOLDEN / "trace_fig3.jsonl").read_text()
    code, out, _ = run(capsys, "check", "--topology", "fig3", "--trace", str(trace))
    assert code == 0 and json.loads(out)["ok"]


def test_check_flags_broken_trace(capsys, tmp_path):
    lines = (GOLDEN / "trace_fig3.jsonl").read_text().splitlines()
    # drop every apply at replica 2 of updates issued elsewhere
    kept = [l for l in lines if not ('"kind":"apply"' in l and '"replica":2' in l and '"update":[1,' in l)]
    assert len(kept) < len(lines)
    broken = tmp_path / "broken.jsonl"
    broken.write_text("\n".join(kept) + "\n")
    code, out, _ = run(capsys, "check", "--topology", "fig3", "--trace", str(broken))
    assert code == 1 and not json.loads(out)["liveness"]["ok"]


def test_fuzz_random_topologies(capsys):
    code, out, _ = run(capsys, "fuzz", "--topology", "random", "--seeds", "0..99", "--m", "3")
    assert code == 0
    summary = json.loads(out[out.index("{"):])
    assert summary == {"runs": 100, "passed": 100, "failed": []}


def test_fuzz_client_server_fixture(capsys):
    code, out, _ = run(capsys, "fuzz", "--topology", "client_cycle", "--mode", "client_server", "--seeds", "0..19")
    assert code == 0


def test_dummies_and_bounds(capsys):
    code, out, _ = run(capsys, "dummies", "--topology", "fig3", "--target", "full")
    assert code == 0
    after = json.loads(out)["after"]["replicas"]
    assert all(row["compressed_count"] == 4 for row in after.values())
    code, out, _ = run(capsys, "bounds", "--topology", "fig3", "--replica", "1", "--m", "1")
    assert code == 2  # four replicas exceed the default enumeration bounds
    with pytest.warns(RuntimeWarning):
        code, out, _ = run(capsys, "bounds", "--topology", "fig3", "--replica", "1", "--m", "1", "--force")
    assert code == 0 and json.loads(out)[0]["bound"] == "pass"


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--topology", "no-such-file"],
        ["fuzz", "--topology", "fig3", "--m", "0"],
        ["fuzz", "--topology", "fig3", "--mode", "client_server"],
        ["bounds", "--topology", "fig3", "--replica", "9"],
        ["check", "--topology", "fig3", "--trace", "/nonexistent"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("error:")


def test_invalid_topology_file(capsys, tmp_path):
    bad = tmp_path / "t.json"
    bad.write_text('{"replicas": [{"id": 1, "registers": ["x"]}, {"id": 1, "registers": ["y"]}]}')
    code, _, err = run(capsys, "analyze", "--topology", str(bad))
    assert code == 2 and "error" in err


def test_parse_seeds():
    assert parse_seeds("7") == [7]
    assert parse_seeds("2..4") == [2, 3, 4]
    assert parse_seeds("1,5") == [1, 5]


def test_workers_give_the_same_report(capsys, monkeypatch):
    _, serial, _ = run(capsys, "fuzz", "--topology", "random", "--seeds", "0..5", "--workers", "1")
    monkeypatch.setenv("CAUSALSHARE_WORKERS", "2")
    _, parallel, _ = run(capsys, "fuzz", "--topology", "random", "--seeds", "0..5")
    assert serial == parallel


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "causalshare", "compare", "--topology", "fig8a"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["disagreements"]
