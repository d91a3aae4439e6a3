"""Continuous-width Lagrangian refinement of a repeater solution.

For fixed positions, the minimum total width with total delay equal to the
target satisfies, for every repeater i,

    1 + λ·∂τ/∂w_i = 0,   ∂τ/∂w_i = C_o(R_{i-1} + R_s/w_{i-1}) - R_s(C_i + C_o w_{i+1})/w_i²

together with τ(w) = τ_t. :func:`solve_widths` solves this (n+1)-unknown
system with a damped Newton iteration. :func:`refine` then moves repeaters
along the wire using the one-sided location derivatives of the delay.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .delay import StageLump, delay_from_lumps, stage_lumps
from .net import Net, RepeaterSolution, TechParams, check_positions, in_forbidden, rc_between, unit_rc_at

log = logging.getLogger(__name__)

W_MIN = 0.01
NEWTON_TOL = 1e-9
NEWTON_MAX_ITERS = 100
MIN_DAMPING = 1e-4
MOVE_MARGIN = 1.0
LAMBDA_EPS = 1e-12


class NoConverge(RuntimeError):
    """Newton iteration hit its cap or a singular Jacobian."""


class NonPositiveWidth(NoConverge):
    """Damping could not keep every width above the floor."""


@dataclass(frozen=True)
class LagrangeState:
    widths: tuple[float, ...]
    lam: float
    residual_norm: float = math.inf
    iterations: int = 0

    @property
    def total_width(self) -> float:
        return math.fsum(self.widths)


@dataclass(frozen=True)
class RefineParams:
    step: float = 25.0
    eps0: float = 1e-3
    max_iters: int = 200
    fd_probe: float = 0.01

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("refine step must be > 0")
        if not self.eps0 > 0:
            raise ValueError("eps0 must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


# ---------------------------------------------------------------------------
# Width system
# ---------------------------------------------------------------------------


def _gradient(tech: TechParams, net: Net, lumps: Sequence[StageLump], w: np.ndarray) -> np.ndarray:
    """∂τ_total/∂w_i for i = 1..n."""
    ws = np.concatenate(([net.w_d], w, [net.w_r]))
    R = np.array([lp.R for lp in lumps])
    C = np.array([lp.C for lp in lumps])
    n = len(w)
    # R[i-1] is the wire into repeater i, C[i] the wire it drives
    return tech.C_o * (R[:n] + tech.R_s / ws[:n]) - tech.R_s * (C[1 : n + 1] + tech.C_o * ws[2:]) / w**2


def width_gradient(tech: TechParams, net: Net, positions: Sequence[float], widths: Sequence[float]) -> list[float]:
    lumps = stage_lumps(net, positions)
    return _gradient(tech, net, lumps, np.asarray(widths, dtype=float)).tolist()


def width_residuals(
    tech: TechParams,
    net: Net,
    positions: Sequence[float],
    widths: Sequence[float],
    lam: float,
    tau_t: float,
) -> list[float]:
    """The n stationarity residuals 1 + λ·∂τ/∂w_i followed by τ_total - τ_t."""
    w = np.asarray(widths, dtype=float)
    if np.any(w <= 0):
        raise ValueError("widths must be > 0")
    lumps = stage_lumps(net, positions)
    g = _gradient(tech, net, lumps, w)
    tau = delay_from_lumps(tech, net, lumps, w)
    return [*(1.0 + lam * g).tolist(), tau - tau_t]


def _scaled_residual(tech, net, lumps, w, lam, tau_t):
    g = _gradient(tech, net, lumps, w)
    tau = delay_from_lumps(tech, net, lumps, w)
    return np.concatenate((1.0 + lam * g, [(tau - tau_t) / tau_t])), g


def _jacobian(tech, net, lumps, w, lam, g, tau_t):
    n = len(w)
    ws = np.concatenate(([net.w_d], w, [net.w_r]))
    C = np.array([lp.C for lp in lumps])
    J = np.zeros((n + 1, n + 1))
    Rs, Co = tech.R_s, tech.C_o
    for i in range(n):
        J[i, i] = lam * 2.0 * Rs * (C[i + 1] + Co * ws[i + 2]) / w[i] ** 3
        if i > 0:
            J[i, i - 1] = -lam * Co * Rs / w[i - 1] ** 2
        if i < n - 1:
            J[i, i + 1] = -lam * Rs * Co / w[i] ** 2
        J[i, n] = g[i]
    J[n, :n] = g / tau_t
    return J


def initial_lambda(g: np.ndarray) -> float:
    """Least-squares fit of 1 + λ·g_i = 0; exactly -1/g_1 for one repeater."""
    denom = float(np.dot(g, g))
    lam = -float(np.sum(g)) / denom if denom > 0 else 0.0
    if not lam > 0:
        lam = 1.0 / max(float(np.mean(np.abs(g))), 1e-300)
    return lam


def _newton(tech, net, lumps, w, lam, tau_t, tol, max_iters):
    F, g = _scaled_residual(tech, net, lumps, w, lam, tau_t)
    norm = float(np.max(np.abs(F)))
    for it in range(max_iters + 1):
        if norm <= tol:
            return LagrangeState(tuple(w.tolist()), lam, norm, it)
        if it == max_iters:
            break
        J = _jacobian(tech, net, lumps, w, lam, g, tau_t)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise NoConverge("singular Jacobian") from None
        if not np.all(np.isfinite(step)):
            raise NoConverge("non-finite Newton step")
        t = 1.0
        merit = float(np.dot(F, F))
        while True:
            w_new = np.maximum(w + t * step[:-1], W_MIN)
            lam_new = lam + t * step[-1]
            F_new, g_new = _scaled_residual(tech, net, lumps, w_new, lam_new, tau_t)
            if float(np.dot(F_new, F_new)) < merit or t <= MIN_DAMPING:
                break
            t *= 0.5
        w, lam, F, g = w_new, lam_new, F_new, g_new
        norm = float(np.max(np.abs(F)))
    if np.any(w <= W_MIN):
        raise NonPositiveWidth(f"width floor reached without convergence (residual {norm:.3g})")
    raise NoConverge(f"no convergence in {max_iters} iterations (residual {norm:.3g})")


def widths_for_lambda(tech, net, lumps, lam, w0=None, iters=500, rtol=1e-13) -> np.ndarray:
    """Stationary widths for a fixed λ > 0 by Gauss-Seidel sweeps of
    w_i = sqrt(λ·R_s(C_i + C_o w_{i+1}) / (1 + λ·C_o(R_{i-1} + R_s/w_{i-1})))."""
    n = len(lumps) - 1
    R = [lp.R for lp in lumps]
    C = [lp.C for lp in lumps]
    ws = [net.w_d, *(w0 if w0 is not None else [1.0] * n), net.w_r]
    Rs, Co = tech.R_s, tech.C_o
    for _ in range(iters):
        change = 0.0
        for i in range(1, n + 1):
            new = math.sqrt(lam * Rs * (C[i] + Co * ws[i + 1]) / (1.0 + lam * Co * (R[i - 1] + Rs / ws[i - 1])))
            change = max(change, abs(new - ws[i]) / new)
            ws[i] = new
        if change <= rtol:
            break
    return np.array(ws[1:-1])


def _lambda_continuation(tech, net, lumps, tau_t, lam0):
    """Root of τ(w(λ)) = τ_t in log λ; w(λ) from :func:`widths_for_lambda`."""
    cache = {}

    def f(mu):
        w = widths_for_lambda(tech, net, lumps, math.exp(mu), cache.get("w"))
        cache["w"] = w
        return math.log(delay_from_lumps(tech, net, lumps, w) / tau_t)

    lo = hi = math.log(lam0)
    f_lo = f_hi = f(lo)
    for _ in range(200):
        if f_lo > 0:
            break
        lo -= 2.0
        f_lo = f(lo)
    for _ in range(200):
        if f_hi < 0:
            break
        hi += 2.0
        f_hi = f(hi)
    if not (f_lo > 0 > f_hi):
        raise NoConverge("timing target below the minimum delay for these positions")
    mu = brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
    lam = math.exp(mu)
    return widths_for_lambda(tech, net, lumps, lam), lam


def solve_widths(
    tech: TechParams,
    net: Net,
    positions: Sequence[float],
    tau_t: float,
    init: LagrangeState | Sequence[float],
    *,
    tol: float = NEWTON_TOL,
    max_iters: int = NEWTON_MAX_ITERS,
) -> LagrangeState:
    """Damped Newton solve of the stationarity conditions plus τ_total = τ_t.

    ``init`` is either a previous :class:`LagrangeState` (warm start) or a
    sequence of starting widths, in which case λ is fitted to them. If Newton
    fails from the given start it is restarted from a point found by a
    one-dimensional search over λ.

    Raises:
        NoConverge: iteration cap reached, singular Jacobian, or a target
            below the minimum delay reachable at these positions.
        NonPositiveWidth: a width stuck at the floor.
    """
    if not positions:
        raise ValueError("solve_widths needs at least one repeater")
    lumps = stage_lumps(net, positions)
    if isinstance(init, LagrangeState):
        w = np.array(init.widths, dtype=float)
        lam = float(init.lam)
    else:
        w = np.array(init, dtype=float)
        lam = math.nan
    if len(w) != len(positions):
        raise ValueError("initial widths do not match the positions")
    if np.any(w <= 0):
        raise ValueError("initial widths must be > 0")
    if not math.isfinite(lam):
        lam = initial_lambda(_gradient(tech, net, lumps, w))
    try:
        state = _newton(tech, net, lumps, w, lam, tau_t, tol, max_iters)
        # τ = τ_t has a second root on the oversized side where widening
        # slows the net down; only λ > 0 is a minimum-width point
        if state.lam > 0:
            return state
        log.debug("Newton reached the oversized root (lambda=%g); searching over lambda", state.lam)
    except NoConverge as exc:
        log.debug("Newton from the given start failed (%s); searching over lambda", exc)
    w, lam = _lambda_continuation(tech, net, lumps, tau_t, lam if lam > 0 else 1.0)
    state = _newton(tech, net, lumps, w, lam, tau_t, tol, max_iters)
    if not state.lam > 0:
        raise NoConverge(f"solve ended with non-positive lambda {state.lam:.3g}")
    return dataclasses.replace(state, iterations=state.iterations + max_iters)


# ---------------------------------------------------------------------------
# Location derivatives
# ---------------------------------------------------------------------------


def dtau_dx(
    tech: TechParams,
    net: Net,
    positions: Sequence[float],
    widths: Sequence[float],
    i: int,
    side: str,
) -> float:
    """One-sided derivative of the total delay with respect to x_i (1-based).

    ``side="right"`` uses the wire just downstream of x_i, ``"left"`` the wire
    just upstream; they differ only at segment boundaries.
    """
    n = len(positions)
    if not 1 <= i <= n:
        raise IndexError(f"repeater index {i} outside 1..{n}")
    if any(w <= 0 for w in widths):
        raise ValueError("widths must be > 0")
    pts = [0.0, *positions, net.length]
    ws = [net.w_d, *widths, net.w_r]
    x = pts[i]
    r, c = unit_rc_at(net, x, side)
    R_prev, _ = rc_between(net, pts[i - 1], x)
    _, C_next = rc_between(net, x, pts[i + 1])
    return (
        tech.C_o * r * (ws[i] - ws[i + 1])
        + tech.R_s * c * (1.0 / ws[i - 1] - 1.0 / ws[i])
        + c * R_prev
        - r * C_next
    )


def location_derivatives(tech, net, positions, widths) -> list[tuple[float, float]]:
    """(left, right) derivative pairs for every repeater."""
    return [
        (
            dtau_dx(tech, net, positions, widths, i, "left"),
            dtau_dx(tech, net, positions, widths, i, "right"),
        )
        for i in range(1, len(positions) + 1)
    ]


# ---------------------------------------------------------------------------
# REFINE
# ---------------------------------------------------------------------------


@dataclass
class RefineResult:
    """Outcome of :func:`refine`.

    ``history`` lists the accepted total widths, starting with the solved
    widths at the initial positions. ``flags`` names anything unusual:
    ``"lambda_zero"``, ``"max_iters"`` or ``"solver_failed"``.
    """

    solution: RepeaterSolution
    lam: float
    history: list[float] = field(default_factory=list)
    iterations: int = 0
    moves: int = 0
    flags: list[str] = field(default_factory=list)
    position_history: list[tuple[float, ...]] = field(default_factory=list)


def _crosses_zone(net: Net, a: float, b: float) -> bool:
    lo, hi = min(a, b), max(a, b)
    return any(z.start < hi and lo < z.end for z in net.zones)


def _propose_moves(tech, net, positions, widths, lam, step, frozen):
    """Desired moves as (gain, index, signed step), best gain first."""
    moves = []
    for i, (d_left, d_right) in enumerate(location_derivatives(tech, net, positions, widths)):
        if i in frozen:
            continue
        down = lam * d_right < 0
        up = lam * d_left > 0
        gain_down = abs(lam * d_right) * step
        gain_up = abs(lam * d_left) * step
        if down and (not up or gain_down >= gain_up):
            moves.append((gain_down, i, step))
        elif up:
            moves.append((gain_up, i, -step))
    moves.sort(key=lambda m: (-m[0], m[1]))
    return moves


def _apply_move(net: Net, positions: list[float], i: int, delta: float) -> float | None:
    """Target position for moving repeater i by delta, or None if illegal."""
    x = positions[i]
    target = x + delta
    L = net.length
    if delta > 0:
        upper = positions[i + 1] if i + 1 < len(positions) else L
        if target >= upper - MOVE_MARGIN:
            target = 0.5 * (x + upper) - MOVE_MARGIN if i + 1 < len(positions) else L - MOVE_MARGIN
        if target <= x:
            return None
    else:
        lower = positions[i - 1] if i > 0 else 0.0
        if target <= lower + MOVE_MARGIN:
            target = 0.5 * (x + lower) + MOVE_MARGIN if i > 0 else MOVE_MARGIN
        if target >= x:
            return None
    if in_forbidden(net, target) or _crosses_zone(net, x, target):
        return None
    return target


def refine(
    tech: TechParams,
    net: Net,
    init: RepeaterSolution,
    tau_t: float,
    params: RefineParams = RefineParams(),
) -> RefineResult:
    """Iteratively move repeaters and re-solve continuous widths.

    Each iteration computes both one-sided location derivatives per
    repeater, moves every repeater whose derivative predicts a width
    reduction by ``params.step`` (skipping moves into or across forbidden
    zones), re-solves the widths and λ, and stops once the relative
    improvement drops to ``params.eps0`` or below.

    Raises:
        NoConverge: if the widths at the initial positions cannot be solved.
    """
    if init.n == 0:
        return RefineResult(init, 0.0, [0.0], 0, 0, [])
    check_positions(net, init.positions)
    positions = list(init.positions)
    state = solve_widths(tech, net, positions, tau_t, init.widths)
    w_total = state.total_width
    result = RefineResult(init, state.lam, [w_total], position_history=[tuple(positions)])
    frozen: set[int] = set()
    eps = math.inf
    it = 0
    while eps > params.eps0:
        if it >= params.max_iters:
            result.flags.append("max_iters")
            break
        it += 1
        if abs(state.lam) <= LAMBDA_EPS:
            result.flags.append("lambda_zero")
            break
        proposals = _propose_moves(tech, net, positions, state.widths, state.lam, params.step, frozen)
        if not proposals:
            break
        frozen = set()

        # all moves together first, then one at a time if that overshoots
        trial = list(positions)
        moved = []
        for _, i, delta in sorted(proposals, key=lambda m: m[1]):
            target = _apply_move(net, trial, i, delta)
            if target is not None:
                trial[i] = target
                moved.append(i)
        accepted = None
        if moved:
            accepted = _try_positions(tech, net, trial, tau_t, state, w_total)
        if accepted is not None:
            positions, state = trial, accepted
            result.moves += len(moved)
        else:
            any_ok = False
            for _, i, delta in proposals:
                trial = list(positions)
                target = _apply_move(net, trial, i, delta)
                new_state = None
                if target is not None:
                    trial[i] = target
                    new_state = _try_positions(tech, net, trial, tau_t, state, state.total_width)
                if new_state is None:
                    frozen.add(i)
                    continue
                positions, state = trial, new_state
                result.moves += 1
                any_ok = True
            if not any_ok:
                break
        old = w_total
        w_total = state.total_width
        eps = (old - w_total) / old
        result.history.append(w_total)
        result.position_history.append(tuple(positions))

    result.iterations = it
    result.lam = state.lam
    sol = RepeaterSolution(tuple(positions), state.widths)
    result.solution = dataclasses.replace(
        sol, delay=delay_from_lumps(tech, net, stage_lumps(net, positions), state.widths)
    )
    return result


def _try_positions(tech, net, positions, tau_t, state, limit):
    try:
        new_state = solve_widths(tech, net, positions, tau_t, state)
    except NoConverge as exc:
        log.debug("width re-solve failed after move: %s", exc)
        return None
    if new_state.total_width > limit:
        return None
    return new_state
