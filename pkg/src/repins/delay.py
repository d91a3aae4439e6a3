"""Elmore delay of buffered stages and the total-width power proxy.

A stage is a repeater (switch-level model: resistance ``R_s/w``, output
capacitance ``C_p·w``) driving a chain of π-modelled wire pieces into the
input capacitance ``C_o·w_next`` of the next gate.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

from .net import Net, RepeaterSolution, TechParams, check_positions, pieces_between


@dataclass(frozen=True)
class WirePiece:
    length: float
    r: float
    c: float


@dataclass(frozen=True)
class StageSpec:
    """One repeater stage: driver width, receiver width, wire pieces in between."""

    w_drive: float
    w_recv: float
    pieces: tuple[WirePiece, ...] = ()


@dataclass(frozen=True)
class StageLump:
    """Lumped quantities of the wire between two consecutive gates.

    ``R`` and ``C`` are total wire resistance and capacitance; ``self_delay``
    is the distributed wire term Σ_j (½ l_j c_j + Σ_{h>j} l_h c_h)·r_j l_j.
    """

    R: float
    C: float
    self_delay: float


def lump_pieces(pieces: Sequence[tuple[float, float, float]]) -> StageLump:
    R = 0.0
    C = 0.0
    self_delay = 0.0
    # receiver side first so the downstream capacitance is a running sum
    downstream = 0.0
    for length, r, c in reversed(pieces):
        cap = c * length
        res = r * length
        self_delay += res * (0.5 * cap + downstream)
        downstream += cap
        R += res
        C += cap
    return StageLump(R, C, self_delay)


def stage_delay(tech: TechParams, stage: StageSpec) -> float:
    """Elmore delay of one stage.

    Returns R_s·C_p + (R_s/w_i)(Σ l c + C_o w_{i+1}) + (Σ l r)·C_o w_{i+1}
    plus the distributed wire self-delay.
    """
    if not stage.w_drive > 0:
        raise ValueError(f"driving width must be > 0, got {stage.w_drive}")
    if stage.w_recv < 0:
        raise ValueError(f"receiving width must be >= 0, got {stage.w_recv}")
    lump = lump_pieces([(p.length, p.r, p.c) for p in stage.pieces])
    return lumped_stage_delay(tech, stage.w_drive, stage.w_recv, lump)


def lumped_stage_delay(tech: TechParams, w_drive: float, w_recv: float, lump: StageLump) -> float:
    load = tech.C_o * w_recv
    return (
        tech.R_s * tech.C_p
        + tech.R_s / w_drive * (lump.C + load)
        + lump.R * load
        + lump.self_delay
    )


def cut_points(net: Net, positions: Sequence[float]) -> list[float]:
    return [0.0, *positions, net.length]


def stage_lumps(net: Net, positions: Sequence[float]) -> list[StageLump]:
    """The n+1 wire lumps obtained by cutting the net at the given positions."""
    pts = cut_points(net, positions)
    return [lump_pieces(pieces_between(net, a, b)) for a, b in zip(pts, pts[1:])]


def stages(net: Net, sol: RepeaterSolution) -> list[StageSpec]:
    pts = cut_points(net, sol.positions)
    ws = [net.w_d, *sol.widths, net.w_r]
    out = []
    for i, (a, b) in enumerate(zip(pts, pts[1:])):
        pieces = tuple(WirePiece(*p) for p in pieces_between(net, a, b))
        out.append(StageSpec(ws[i], ws[i + 1], pieces))
    return out


def delay_from_lumps(
    tech: TechParams, net: Net, lumps: Sequence[StageLump], widths: Sequence[float]
) -> float:
    ws = [net.w_d, *widths, net.w_r]
    return math.fsum(
        lumped_stage_delay(tech, ws[i], ws[i + 1], lump) for i, lump in enumerate(lumps)
    )


def total_delay(tech: TechParams, net: Net, sol: RepeaterSolution) -> float:
    """Sum of the n+1 stage delays with w_0 = w_d and w_{n+1} = w_r.

    Raises:
        ValueError: if a repeater is unordered, outside (0, L) or in a zone.
    """
    check_positions(net, sol.positions)
    return delay_from_lumps(tech, net, stage_lumps(net, sol.positions), sol.widths)


def power_proxy(sol: RepeaterSolution) -> float:
    """Total repeater width, proportional to repeater power up to a constant."""
    return sol.total_width


def evaluate(tech: TechParams, net: Net, sol: RepeaterSolution) -> RepeaterSolution:
    """Copy of ``sol`` whose delay field is recomputed from scratch."""
    return dataclasses.replace(sol, delay=total_delay(tech, net, sol))


# Relative slack allowed when re-validating a claimed-feasible solution, so
# that a last-bit difference between solver bookkeeping and a fresh
# evaluation is not reported as a violation.
FEASIBILITY_RTOL = 1e-9


def meets_target(delay: float, tau_t: float, rtol: float = FEASIBILITY_RTOL) -> bool:
    return delay <= tau_t * (1.0 + rtol)
