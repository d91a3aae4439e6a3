import dataclasses
import math

import numpy as np
import pytest

from repins.delay import total_delay
from repins.dp import DPConfig, Infeasible, dp_min_delay, dp_min_power
from repins.net import RepeaterSolution, candidate_grid, in_forbidden, make_net
from repins.rip import (
    RipInfeasible,
    RipParams,
    refine_only,
    rip,
    round_up,
    round_width,
    synthesize_config,
)

from _oracles import METAL4, METAL5, TECH, random_net

NET = make_net(
    [(3000.0, *METAL4), (2500.0, *METAL5), (4000.0, *METAL4), (2500.0, *METAL5)],
    [(3000.0, 5000.0)],
    w_d=100.0,
    w_r=100.0,
)


def coarse_min_delay(net, params=RipParams()):
    cfg = DPConfig(params.coarse_widths, tuple(candidate_grid(net, params.coarse_loc_step)))
    return dp_min_delay(TECH, net, cfg)[1]


def test_round_width():
    assert round_width(83, 10) == 80
    assert round_width(158, 10) == 160
    assert round_width(85, 10) == 90
    assert round_width(3, 10) == 10
    assert round_up(83, 10) == 90
    assert round_up(80, 10) == 90


def test_synthesize_config_examples():
    net = make_net([(4000.0, *METAL4)], w_d=100.0, w_r=100.0)
    refined = RepeaterSolution((1000.0, 2500.0), (83.0, 158.0))
    cfg = synthesize_config(net, refined, RipParams())
    assert cfg.widths == (80.0, 160.0)
    around_1000 = [x for x in cfg.candidates if x <= 1500.0]
    assert around_1000 == [500.0 + 50.0 * k for k in range(21)]
    assert synthesize_config(net, RepeaterSolution((1000.0,), (3.0,)), RipParams()).widths == (10.0,)


def test_synthesize_config_clips_and_drops_forbidden():
    net = make_net([(2000.0, *METAL4)], [(300.0, 600.0)], w_d=100.0, w_r=100.0)
    cfg = synthesize_config(net, RepeaterSolution((200.0,), (50.0,)), RipParams())
    assert all(0.0 < x < 2000.0 for x in cfg.candidates)
    assert not any(in_forbidden(net, x) for x in cfg.candidates)
    # the zone ends themselves stay legal
    assert 300.0 in cfg.candidates and 600.0 in cfg.candidates


def test_synthesize_widen_flag():
    net = make_net([(4000.0, *METAL4)], w_d=100.0, w_r=100.0)
    cfg = synthesize_config(net, RepeaterSolution((1000.0,), (83.0,)), RipParams(widen_library=True))
    assert cfg.widths == (70.0, 80.0, 90.0)


def test_loose_target_returns_empty_solution():
    unbuffered = total_delay(TECH, NET, RepeaterSolution())
    out = rip(TECH, NET, unbuffered * 1.01)
    assert out.solution.n == 0
    assert out.solution.total_width == 0.0


def test_target_below_every_reachable_delay_is_infeasible():
    with pytest.raises(RipInfeasible) as info:
        rip(TECH, NET, 0.5 * coarse_min_delay(NET))
    assert info.value.stage_trace
    assert isinstance(info.value, Infeasible)


def test_feasible_and_never_worse_than_seed():
    params = RipParams()
    cfg = DPConfig(params.coarse_widths, tuple(candidate_grid(NET, params.coarse_loc_step)))
    tau_min = coarse_min_delay(NET)
    for ratio in (1.05, 1.2, 1.5, 2.0):
        tau_t = ratio * tau_min
        seed = dp_min_power(TECH, NET, cfg, tau_t)
        out = rip(TECH, NET, tau_t, params)
        assert total_delay(TECH, NET, out.solution) <= tau_t
        assert out.solution.total_width <= seed.total_width
        assert not any(in_forbidden(NET, x) for x in out.solution.positions)
        assert [r.stage for r in out.stage_trace][:1] == ["coarse_dp"]


def test_random_nets_always_feasible_and_bounded_by_seed():
    rng = np.random.default_rng(11)
    params = RipParams()
    for _ in range(8):
        net = random_net(rng, n_seg=int(rng.integers(3, 7)))
        tau_min = coarse_min_delay(net, params)
        tau_t = tau_min * float(rng.uniform(1.05, 2.05))
        cfg = DPConfig(params.coarse_widths, tuple(candidate_grid(net, params.coarse_loc_step)))
        seed = dp_min_power(TECH, net, cfg, tau_t)
        out = rip(TECH, net, tau_t, params)
        assert total_delay(TECH, net, out.solution) <= tau_t
        assert out.solution.total_width <= seed.total_width


def test_coarse_infeasible_target_is_seeded_from_min_delay():
    # a target just under what the 80u-step coarse library reaches is still
    # reachable with continuous widths at the min-delay placement
    params = RipParams()
    tau_coarse = coarse_min_delay(NET, params)
    cfg = DPConfig(params.coarse_widths, tuple(candidate_grid(NET, params.coarse_loc_step)))
    sol_d, _ = dp_min_delay(TECH, NET, cfg)
    tau_t = tau_coarse * (1 - 1e-4)
    with pytest.raises(Infeasible):
        dp_min_power(TECH, NET, cfg, tau_t)
    try:
        out = rip(TECH, NET, tau_t, params)
    except RipInfeasible as exc:
        # allowed only if every later stage failed as well
        assert exc.stage_trace[0].note.startswith("infeasible")
        return
    assert out.stage_trace[0].note.startswith("infeasible")
    assert total_delay(TECH, NET, out.solution) <= tau_t


def test_deterministic():
    tau_t = 1.3 * coarse_min_delay(NET)
    a = rip(TECH, NET, tau_t).solution
    b = rip(TECH, NET, tau_t).solution
    assert a == b


def test_refine_only_is_continuous_and_meets_target():
    tau_t = 1.3 * coarse_min_delay(NET)
    out = refine_only(TECH, NET, tau_t)
    assert out.source == "refine"
    assert out.solution.delay == pytest.approx(tau_t, rel=1e-8)


def test_bound_flag_does_not_change_result():
    tau_t = 1.25 * coarse_min_delay(NET)
    a = rip(TECH, NET, tau_t, RipParams(dp_bound=True)).solution
    b = rip(TECH, NET, tau_t, RipParams(dp_bound=False)).solution
    assert a.total_width == b.total_width


def test_params_validation():
    with pytest.raises(ValueError):
        RipParams(coarse_widths=())
    with pytest.raises(ValueError):
        RipParams(coarse_widths=(80.0, 40.0))
    with pytest.raises(ValueError):
        RipParams(round_quantum=0)
    with pytest.raises(ValueError):
        rip(TECH, NET, -1.0)
