import math

import numpy as np
import pytest

from repins.bench import (
    CSV_COLUMNS,
    DEFAULT_TECH,
    GenParams,
    Row,
    compute_tau_min,
    gen_net,
    parse_strategy,
    read_csv,
    reference_config,
    rows_to_csv,
    saving_percent,
    summarize,
    sweep,
    target_ratios,
)
from repins.delay import total_delay
from repins.dp import DPConfig
from repins.net import RepeaterSolution, candidate_grid, make_net, net_to_dict, validate_net

from _oracles import TECH, brute_min_delay


def test_default_tech_matches_shipped_values():
    assert DEFAULT_TECH == TECH


def test_gen_is_deterministic():
    assert net_to_dict(gen_net(GenParams(seed=7)), TECH) == net_to_dict(gen_net(GenParams(seed=7)), TECH)
    assert gen_net(GenParams(seed=7)) != gen_net(GenParams(seed=8))


def test_gen_ranges_over_many_seeds():
    for seed in range(1000):
        net = gen_net(GenParams(seed=seed))
        validate_net(net)
        assert 4 <= len(net.segments) <= 10
        assert all(1000 <= s.length <= 2500 for s in net.segments)
        assert len(net.zones) == 1
        z = net.zones[0]
        frac = (z.end - z.start) / net.length
        # zone ends are rounded to whole micrometres
        assert 0.20 - 1.0 / net.length <= frac <= 0.40 + 1.0 / net.length
        assert 0 <= z.start < z.end <= net.length
        layers = [(s.r, s.c) for s in net.segments]
        assert all(a != b for a, b in zip(layers, layers[1:]))


def test_gen_params_validation():
    with pytest.raises(ValueError):
        GenParams(n_segments=(5, 4))
    with pytest.raises(ValueError):
        GenParams(zone_fraction=(0.2, 1.5))


def test_target_ratios():
    r = target_ratios(20)
    assert len(r) == 20
    assert r[0] == 1.05 and r[-1] == pytest.approx(2.05)
    assert np.allclose(np.diff(r), 1.0 / 19)
    with pytest.raises(ValueError):
        target_ratios(1)


def test_tau_min_bounded_by_unbuffered_and_monotone_in_config():
    net = gen_net(GenParams(seed=3))
    tau = compute_tau_min(TECH, net)
    assert tau <= total_delay(TECH, net, RepeaterSolution())
    coarse = DPConfig((20.0, 100.0, 200.0), tuple(candidate_grid(net, 400.0)))
    richer = DPConfig((20.0, 60.0, 100.0, 200.0), tuple(candidate_grid(net, 200.0)))
    assert compute_tau_min(TECH, net, richer) <= compute_tau_min(TECH, net, coarse)


def test_tau_min_tiny_net_matches_enumeration():
    net = make_net([(600.0, 0.075, 0.2e-15), (700.0, 0.045, 0.25e-15)], w_d=20.0, w_r=100.0)
    cfg = DPConfig((10.0, 50.0, 200.0), (300.0, 600.0, 1000.0))
    assert compute_tau_min(TECH, net, cfg) == pytest.approx(brute_min_delay(TECH, net, cfg.candidates, cfg.widths), rel=1e-12)


def test_parse_strategy():
    assert parse_strategy("rip").name == "rip"
    assert parse_strategy("dp:10:400:10@100").name == "dp:10:400:10@100"
    assert parse_strategy("dplib:10:20").name == "dplib:10:20"
    for bad in ("dp:10:400", "foo", "dplib:x:10", "rip@50"):
        with pytest.raises(ValueError):
            parse_strategy(bad)


def test_saving_percent():
    assert saving_percent(200.0, 150.0) == 25.0
    assert saving_percent(0.0, 0.0) == 0.0
    assert saving_percent(0.0, 10.0) == -math.inf


def test_sweep_rows_and_revalidation():
    net = gen_net(GenParams(seed=5))
    strategies = [parse_strategy("rip"), parse_strategy("dplib:10:10")]
    rep = sweep(TECH, net, strategies, n_targets=4, net_id="n5")
    assert len(rep.rows) == 8
    assert sum(r.strategy == "rip" for r in rep.rows) == 4
    tau_min = rep.tau_min["n5"]
    for r in rep.rows:
        if r.feasible:
            assert r.delay <= r.ratio * tau_min
        assert r.runtime >= 0
    assert rep.reference == reference_config(net).fingerprint()


def test_violation_count_matches_rows():
    rows = [
        Row("a", 1.0, "rip", True, 10.0, 1.0, 0.1),
        Row("a", 1.0, "dp", False, math.nan, math.nan, 1.0),
        Row("a", 2.0, "rip", True, 10.0, 1.0, 0.1),
        Row("a", 2.0, "dp", True, 20.0, 1.0, 1.0),
    ]
    s = summarize(rows)["strategies"]["dp"]
    assert s["violations_total"] == 1
    assert s["delta_mean"] == 50.0
    assert s["speedup"] == pytest.approx(10.0)


def test_csv_round_trip(tmp_path):
    rows = [
        Row("b", 1.5, "rip", True, 30.0, 1.25e-9, 0.5),
        Row("a", 1.05, "dp:10:400:10", False, math.nan, math.nan, 0.25),
    ]
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    p = tmp_path / "r.csv"
    p.write_text(text)
    back = read_csv(p)
    assert [r.net_id for r in back] == ["a", "b"]
    assert back[1] == rows[0]
    assert math.isnan(back[0].total_width) and not back[0].feasible
