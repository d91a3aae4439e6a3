import csv
import json

import pytest

from repins.cli import main
from repins.net import load_net


@pytest.fixture(scope="module")
def nets(tmp_path_factory):
    d = tmp_path_factory.mktemp("nets")
    assert main(["gen", "--seed", "3", "--count", "2", "--out", str(d)]) == 0
    return d


def test_gen_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", "--seed", "7", "--out", str(a)]) == 0
    assert main(["gen", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    net, tech = load_net(a)
    assert len(net.zones) == 1


@pytest.mark.parametrize("mode", ["rip", "dp", "refine"])
def test_solve_modes(nets, tmp_path, mode):
    out = tmp_path / "sol.json"
    net_file = sorted(nets.glob("*.json"))[0]
    assert main(["solve", "--net", str(net_file), "--target-ratio", "1.4", "--mode", mode, "--out", str(out)]) == 0
    sol = json.loads(out.read_text())
    assert set(sol) >= {"repeaters", "delay_s", "total_width_u", "feasible", "stage_trace", "runtime_s"}
    assert sol["feasible"] is True
    assert sol["delay_s"] <= sol["target_s"] * (1 + 1e-9)
    assert sol["total_width_u"] == pytest.approx(sum(r["width_u"] for r in sol["repeaters"]))


def test_solve_dp_library_flags(nets, tmp_path):
    out = tmp_path / "sol.json"
    net_file = sorted(nets.glob("*.json"))[0]
    args = ["solve", "--net", str(net_file), "--target-ratio", "1.5", "--mode", "dp", "--out", str(out)]
    assert main(args + ["--dp-lib-size", "10", "--dp-gran", "40"]) == 0
    widths = {r["width_u"] for r in json.loads(out.read_text())["repeaters"]}
    assert widths <= {10.0 + 40.0 * k for k in range(10)}
    assert main(args + ["--dp-lib-size", "10"]) == 2


def test_solve_below_tau_min_exits_1(nets, tmp_path):
    out = tmp_path / "sol.json"
    net_file = sorted(nets.glob("*.json"))[0]
    assert main(["solve", "--net", str(net_file), "--target-sec", "1e-12", "--mode", "dp", "--out", str(out)]) == 1
    assert json.loads(out.read_text())["feasible"] is False
    assert main(["solve", "--net", str(net_file), "--target-sec", "1e-12", "--out", str(out)]) == 1


def test_usage_errors_exit_2(nets, tmp_path, capsys):
    net_file = sorted(nets.glob("*.json"))[0]
    out = str(tmp_path / "x")
    assert main(["solve", "--net", str(net_file), "--out", out]) == 2
    assert main(["solve", "--net", str(net_file), "--target-ratio", "-1", "--out", out]) == 2
    assert "--target-ratio" in capsys.readouterr().err
    assert main(["solve", "--net", str(net_file), "--target-ratio", "1.2", "--dp-widths", "1:2", "--mode", "dp", "--out", out]) == 2
    assert main(["sweep", "--nets", str(nets), "--strategies", "nope", "--out", out]) == 2
    assert main(["bogus"]) == 2


def test_bad_net_file_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"segments": []}))
    assert main(["solve", "--net", str(bad), "--target-ratio", "1.2", "--out", str(tmp_path / "s.json")]) == 2


def test_sweep_and_compare(nets, tmp_path):
    report = tmp_path / "r.csv"
    assert main(["sweep", "--nets", str(nets), "--strategies", "rip,dp:10:400:40", "--out", str(report)]) == 0
    with open(report) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 80
    assert list(rows[0]) == ["net_id", "ratio", "strategy", "feasible", "total_width_u", "delay_s", "runtime_s"]
    summary = tmp_path / "s.json"
    assert main(["compare", "--report", str(report), "--summary", str(summary)]) == 0
    data = json.loads(summary.read_text())
    assert data["baseline"] == "rip"
    assert "dp:10:400:40" in data["strategies"]
    assert main(["compare", "--report", str(report), "--baseline", "zzz", "--summary", str(summary)]) == 2
