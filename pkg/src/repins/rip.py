"""Hybrid repeater insertion: coarse DP, analytic refinement, fine DP.

1. DP over a coarse width library and a uniform candidate grid.
2. Continuous refinement of widths and positions (:func:`repins.analytic.refine`).
3. A small library of rounded refined widths plus candidates clustered
   around the refined positions.
4. DP again over that library and candidate set.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

from .analytic import NoConverge, RefineParams, refine
from .delay import total_delay
from .dp import DPConfig, Infeasible, dp_min_delay, dp_min_power, width_library
from .net import Net, RepeaterSolution, TechParams, candidate_grid, in_forbidden

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RipParams:
    coarse_widths: tuple[float, ...] = width_library(5, 80.0)
    coarse_loc_step: float = 200.0
    round_quantum: float = 10.0
    neighbor_count: int = 10
    neighbor_step: float = 50.0
    refine: RefineParams = RefineParams()
    # also offer each rounded width ± one quantum to the fine DP
    widen_library: bool = False
    # target-aware bound pruning inside every DP call (exact; see repins.dp)
    dp_bound: bool = True

    def __post_init__(self) -> None:
        ws = tuple(float(w) for w in self.coarse_widths)
        object.__setattr__(self, "coarse_widths", ws)
        if not ws or any(w <= 0 for w in ws) or any(b <= a for a, b in zip(ws, ws[1:])):
            raise ValueError("coarse widths must be positive and strictly increasing")
        for name in ("coarse_loc_step", "round_quantum", "neighbor_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.neighbor_count < 0:
            raise ValueError("neighbor_count must be >= 0")


class DegenerateNet(ValueError):
    """No legal candidate position survives around the refined repeaters."""


def round_width(w: float, quantum: float) -> float:
    """Nearest multiple of ``quantum`` (halves round up), never below one quantum."""
    return max(math.floor(w / quantum + 0.5), 1) * quantum


def round_up(w: float, quantum: float) -> float:
    """Next multiple of ``quantum`` strictly above the nearest-rounded width's floor.

    A width that is already a multiple moves up one quantum, so the result is
    always at least as wide as ``w``.
    """
    return (math.floor(w / quantum) + 1) * quantum


def synthesize_config(net: Net, refined: RepeaterSolution, params: RipParams) -> DPConfig:
    """Library of rounded refined widths and candidates around refined positions."""
    if refined.n == 0:
        raise ValueError("cannot synthesize a library from an empty solution")
    q = params.round_quantum
    lib = {round_width(w, q) for w in refined.widths}
    if params.widen_library:
        lib |= {w + q for w in lib} | {w - q for w in lib if w - q > 0}
    L = net.length
    cands = set()
    k_max = params.neighbor_count
    for x in refined.positions:
        for k in range(-k_max, k_max + 1):
            y = x + k * params.neighbor_step
            if 0 < y < L and not in_forbidden(net, y):
                cands.add(y)
    if not cands:
        raise DegenerateNet("no legal candidate positions around the refined solution")
    return DPConfig(tuple(sorted(lib)), tuple(sorted(cands)))


@dataclass
class StageRecord:
    stage: str
    total_width: float
    delay: float
    runtime_s: float
    n_repeaters: int
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "total_width_u": self.total_width,
            "delay_s": self.delay,
            "runtime_s": self.runtime_s,
            "n_repeaters": self.n_repeaters,
            "note": self.note,
        }


@dataclass
class RipOutcome:
    solution: RepeaterSolution
    stage_trace: list[StageRecord] = field(default_factory=list)
    runtime_s: float = 0.0
    source: str = "fine_dp"


class RipInfeasible(Infeasible):
    """RIP could not meet the target; ``stage_trace`` shows how far it got."""

    def __init__(self, msg: str, stage_trace: list[StageRecord]):
        super().__init__(msg)
        self.stage_trace = stage_trace


def _record(trace, stage, sol, t0, note=""):
    trace.append(StageRecord(stage, sol.total_width, sol.delay, time.perf_counter() - t0, sol.n, note))


def _meets(tech: TechParams, net: Net, sol: RepeaterSolution, tau_t: float) -> bool:
    return total_delay(tech, net, sol) <= tau_t


def rip(tech: TechParams, net: Net, tau_t: float, params: RipParams = RipParams()) -> RipOutcome:
    """Minimum-width repeater solution meeting ``tau_t`` via the hybrid pipeline.

    The returned solution has been re-evaluated from scratch and never has a
    larger total width than the coarse DP seed when that seed is feasible.

    Raises:
        RipInfeasible: if neither the coarse seed nor the fine DP meets ``tau_t``.
    """
    if not tau_t > 0:
        raise ValueError(f"timing target must be > 0, got {tau_t}")
    start = time.perf_counter()
    trace: list[StageRecord] = []

    # line 1: coarse DP
    t0 = time.perf_counter()
    coarse = DPConfig(params.coarse_widths, tuple(candidate_grid(net, params.coarse_loc_step)))
    seed_ok = True
    try:
        seed = dp_min_power(tech, net, coarse, tau_t, bound=params.dp_bound)
        _record(trace, "coarse_dp", seed, t0)
    except Infeasible:
        # the continuous solve may still reach tau_t from the min-delay placement
        seed_ok = False
        seed, _ = dp_min_delay(tech, net, coarse)
        _record(trace, "coarse_dp", seed, t0, "infeasible; min-delay seed")
    if seed_ok and seed.n == 0:
        return RipOutcome(seed, trace, time.perf_counter() - start, "coarse_dp")

    # line 2: REFINE
    t0 = time.perf_counter()
    refined = None
    if seed.n > 0:
        try:
            res = refine(tech, net, seed, tau_t, params.refine)
            refined = res.solution
            note = ",".join(res.flags) or f"{res.iterations} iterations, {res.moves} moves"
            _record(trace, "refine", refined, t0, note)
        except NoConverge as exc:
            log.debug("refine failed: %s", exc)
            trace.append(StageRecord("refine", math.nan, math.nan, time.perf_counter() - t0, seed.n, "solver failed"))
    if refined is None:
        if not seed_ok:
            raise RipInfeasible(f"no solution meets tau_t={tau_t:.6g}s", trace)
        refined = seed

    # lines 3-4: synthesized library and candidates, fine DP
    t0 = time.perf_counter()
    final = None
    try:
        cfg = synthesize_config(net, refined, params)
    except DegenerateNet:
        cfg = None
    if cfg is not None:
        try:
            final = dp_min_power(tech, net, cfg, tau_t, bound=params.dp_bound)
        except Infeasible:
            final = None
        # Retry with every refined width also rounded up when rounding broke
        # feasibility, or when the nearest-only library pushed the DP to a
        # result wider than the rounded-up refined widths would cost.
        q = params.round_quantum
        ceiling = math.fsum(round_up(w, q) for w in refined.widths)
        if final is None or final.total_width > ceiling:
            wider = set(cfg.widths) | {round_up(w, q) for w in refined.widths}
            retry_cfg = DPConfig(tuple(sorted(wider)), cfg.candidates)
            try:
                retry = dp_min_power(tech, net, retry_cfg, tau_t, bound=params.dp_bound)
                if final is None or retry.total_width < final.total_width:
                    final, cfg = retry, retry_cfg
            except Infeasible:
                pass
    if final is not None and not _meets(tech, net, final, tau_t):
        final = None
    if final is not None:
        _record(trace, "fine_dp", final, t0, f"library={len(cfg.widths)} candidates={len(cfg.candidates)}")
    else:
        trace.append(StageRecord("fine_dp", math.nan, math.nan, time.perf_counter() - t0, 0, "infeasible"))

    if seed_ok and not _meets(tech, net, seed, tau_t):
        seed_ok = False
    if final is None and not seed_ok:
        raise RipInfeasible(f"no solution meets tau_t={tau_t:.6g}s", trace)
    if final is None or (seed_ok and seed.total_width < final.total_width):
        return RipOutcome(seed, trace, time.perf_counter() - start, "coarse_dp")
    return RipOutcome(final, trace, time.perf_counter() - start, "fine_dp")


def refine_only(tech: TechParams, net: Net, tau_t: float, params: RipParams = RipParams()) -> RipOutcome:
    """Coarse DP followed by REFINE; continuous widths, no final DP."""
    start = time.perf_counter()
    trace: list[StageRecord] = []
    t0 = time.perf_counter()
    coarse = DPConfig(params.coarse_widths, tuple(candidate_grid(net, params.coarse_loc_step)))
    try:
        seed = dp_min_power(tech, net, coarse, tau_t, bound=params.dp_bound)
        _record(trace, "coarse_dp", seed, t0)
    except Infeasible:
        seed, _ = dp_min_delay(tech, net, coarse)
        _record(trace, "coarse_dp", seed, t0, "infeasible; min-delay seed")
    if seed.n == 0:
        if not _meets(tech, net, seed, tau_t):
            raise RipInfeasible(f"no solution meets tau_t={tau_t:.6g}s", trace)
        return RipOutcome(seed, trace, time.perf_counter() - start, "coarse_dp")
    t0 = time.perf_counter()
    try:
        res = refine(tech, net, seed, tau_t, params.refine)
    except NoConverge as exc:
        raise RipInfeasible(f"refine failed: {exc}", trace) from exc
    _record(trace, "refine", res.solution, t0, ",".join(res.flags))
    return RipOutcome(res.solution, trace, time.perf_counter() - start, "refine")
