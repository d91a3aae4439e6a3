"""Dynamic-programming repeater insertion over a discrete width library.

Candidates are swept from the receiver toward the driver. Each partial
solution (label) carries the capacitance seen downstream, the Elmore delay
from the current point to the receiver and the total width placed so far.
Dominated labels are pruned; pruning is exact (strict Pareto, no epsilon).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .delay import lump_pieces
from .net import Net, RepeaterSolution, TechParams, in_forbidden, pieces_between


class Infeasible(Exception):
    """No placement in the search space meets the timing target."""


class LabelLimitExceeded(RuntimeError):
    """The live label count exceeded the configured cap."""


@dataclass(frozen=True)
class DPConfig:
    """Allowed repeater widths and candidate positions.

    Both are sorted ascending. Candidates must already avoid forbidden zones
    and the two terminals; :meth:`check` verifies this against a net.
    """

    widths: tuple[float, ...]
    candidates: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
        object.__setattr__(self, "candidates", tuple(float(x) for x in self.candidates))
        if not self.widths:
            raise ValueError("width library is empty")
        if any(w <= 0 for w in self.widths):
            raise ValueError("library widths must be > 0")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ValueError("library widths must be strictly increasing")
        if any(b <= a for a, b in zip(self.candidates, self.candidates[1:])):
            raise ValueError("candidates must be strictly increasing")

    def check(self, net: Net) -> None:
        L = net.length
        for x in self.candidates:
            if not 0 < x < L:
                raise ValueError(f"candidate {x} outside (0, {L})")
            if in_forbidden(net, x):
                raise ValueError(f"candidate {x} inside a forbidden zone")

    def fingerprint(self) -> str:
        ws = self.widths
        return (
            f"widths={len(ws)}[{ws[0]:g}..{ws[-1]:g}] "
            f"candidates={len(self.candidates)}"
        )


def width_range(lo: float, hi: float, step: float) -> tuple[float, ...]:
    """Widths lo, lo+step, ... up to and including hi when it lies on the grid."""
    if not (lo > 0 and step > 0 and hi >= lo):
        raise ValueError(f"bad width range {lo}:{hi}:{step}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(lo + k * step for k in range(n))


def width_library(size: int, granularity: float, smallest: float | None = None) -> tuple[float, ...]:
    """``size`` widths starting at ``smallest`` (default: the granularity)."""
    first = granularity if smallest is None else smallest
    return tuple(first + k * granularity for k in range(size))


@dataclass(frozen=True)
class DPLabel:
    c_load: float
    d_down: float
    w_total: float
    trace: object = None


# ---------------------------------------------------------------------------
# Dominance pruning
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _pareto_sweep(rank, d, nranks):
    # labels arrive sorted by (w, c, d, tiebreak); a Fenwick tree over c-rank
    # holds the minimum d seen so far among labels with smaller-or-equal w
    n = rank.shape[0]
    tree = np.full(nranks + 1, np.inf)
    keep = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        j = rank[i] + 1
        m = np.inf
        while j > 0:
            if tree[j] < m:
                m = tree[j]
            j -= j & -j
        if m <= d[i]:
            continue
        keep[i] = True
        j = rank[i] + 1
        while j <= nranks:
            if d[i] < tree[j]:
                tree[j] = d[i]
            j += j & -j
    return keep


def pareto_mask(c: np.ndarray, d: np.ndarray, w: np.ndarray, tiebreak: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of the labels on the strict (c, d, w) Pareto frontier.

    Of a group of exact duplicates exactly one survives: the one with the
    smallest ``tiebreak`` value.
    """
    n = len(c)
    if n == 0:
        return np.zeros(0, dtype=bool)
    keys = [d, c, w] if tiebreak is None else [tiebreak, d, c, w]
    order = np.lexsort(keys)
    uniq, rank = np.unique(c, return_inverse=True)
    keep_sorted = _pareto_sweep(rank[order].astype(np.int64), d[order], len(uniq))
    mask = np.zeros(n, dtype=bool)
    mask[order[keep_sorted]] = True
    return mask


def pareto_mask_2d(c: np.ndarray, d: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Strict (c, d) frontier; among equal (c, d) the smallest w survives."""
    n = len(c)
    if n == 0:
        return np.zeros(0, dtype=bool)
    order = np.lexsort([w, d, c])
    ds = d[order]
    prev_min = np.minimum.accumulate(np.concatenate(([np.inf], ds[:-1])))
    keep_sorted = ds < prev_min
    mask = np.zeros(n, dtype=bool)
    mask[order[keep_sorted]] = True
    return mask


def prune_dominated(labels: Sequence[DPLabel]) -> list[DPLabel]:
    """Drop labels weakly dominated in (c_load, d_down, w_total).

    Exact duplicates collapse to the first occurrence; input order is kept.
    """
    if not labels:
        return []
    c = np.array([lb.c_load for lb in labels], dtype=float)
    d = np.array([lb.d_down for lb in labels], dtype=float)
    w = np.array([lb.w_total for lb in labels], dtype=float)
    mask = pareto_mask(c, d, w, np.arange(len(labels)))
    return [lb for lb, k in zip(labels, mask) if k]


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


@dataclass
class DPStats:
    peak_labels: int = 0
    total_labels: int = 0


@dataclass
class _Front:
    c: np.ndarray
    d: np.ndarray
    w: np.ndarray
    nrep: np.ndarray
    # index into the previous layer and library index placed here (-1: none)
    parent: np.ndarray
    choice: np.ndarray


def _spans(net: Net, candidates: Sequence[float]):
    pts = [0.0, *candidates, net.length]
    return [lump_pieces(pieces_between(net, a, b)) for a, b in zip(pts, pts[1:])]


def _upstream_fronts(tech: TechParams, net: Net, lib: np.ndarray, spans):
    """Exact upstream delay bounds at every candidate.

    Entry k of the first list holds pairs (a, b) such that the smallest delay
    from the driver up to candidate k, over every placement strictly upstream
    of it, is min(a + b·c) when the wire at candidate k sees downstream load
    c. The second list holds the single pair for an unbuffered upstream.
    """
    intrinsic = tech.R_s * tech.C_p
    a = np.array([intrinsic])
    b = np.array([tech.R_s / net.w_d])
    a0, b0 = intrinsic, tech.R_s / net.w_d
    fronts = []
    direct = []
    for span in spans[:-1]:
        a = a + b * span.C + span.self_delay
        b = b + span.R
        a0 = a0 + b0 * span.C + span.self_delay
        b0 = b0 + span.R
        fronts.append((a, b))
        direct.append((a0, b0))
        na = np.concatenate([a, (a[:, None] + b[:, None] * tech.C_o * lib[None, :] + intrinsic).ravel()])
        nb = np.concatenate([b, np.repeat((tech.R_s / lib)[None, :], len(a), axis=0).ravel()])
        order = np.lexsort([nb, na])
        bs = nb[order]
        prev = np.minimum.accumulate(np.concatenate(([np.inf], bs[:-1])))
        keep = order[bs < prev]
        a, b = na[keep], nb[keep]
    return fronts, direct


def _min_upstream(front: tuple[np.ndarray, np.ndarray], c: np.ndarray) -> np.ndarray:
    a, b = front
    out = np.full(len(c), np.inf)
    chunk = max(1, 200_000 // max(1, len(a)))
    for i in range(0, len(c), chunk):
        cc = c[i : i + chunk]
        out[i : i + chunk] = (a[None, :] + b[None, :] * cc[:, None]).min(axis=1)
    return out


def _sweep(
    tech: TechParams,
    net: Net,
    cfg: DPConfig,
    objective: str,
    tau_t: float = math.inf,
    prune: bool = True,
    max_labels: int | None = None,
    stats: DPStats | None = None,
    bound: bool = True,
):
    cfg.check(net)
    cand = cfg.candidates
    spans = _spans(net, cand)
    lib = np.asarray(cfg.widths, dtype=float)
    nw = len(lib)
    Rs, Co = tech.R_s, tech.C_o
    intrinsic = tech.R_s * tech.C_p
    bounded = bound and math.isfinite(tau_t)
    slack = tau_t * (1.0 + 1e-12)
    if bounded:
        upstream, direct = _upstream_fronts(tech, net, lib, spans)
    w_best = math.inf

    c = np.array([Co * net.w_r])
    d = np.array([0.0])
    w = np.array([0.0])
    nrep = np.array([0], dtype=np.int64)
    layers: list[_Front] = []

    for k in range(len(cand) - 1, -1, -1):
        span = spans[k + 1]
        d = d + span.self_delay + span.R * c
        c = c + span.C
        m = len(c)
        # fork: column 0 keeps the label, column j+1 places lib[j]
        fc = np.empty((m, nw + 1))
        fd = np.empty((m, nw + 1))
        fw = np.empty((m, nw + 1))
        fn = np.empty((m, nw + 1), dtype=np.int64)
        fc[:, 0] = c
        fd[:, 0] = d
        fw[:, 0] = w
        fn[:, 0] = nrep
        fc[:, 1:] = Co * lib[None, :]
        fd[:, 1:] = d[:, None] + intrinsic + Rs * c[:, None] / lib[None, :]
        fw[:, 1:] = w[:, None] + lib[None, :]
        fn[:, 1:] = nrep[:, None] + 1
        parent = np.repeat(np.arange(m), nw + 1)
        choice = np.tile(np.arange(-1, nw), m)
        c, d, w, nrep = fc.ravel(), fd.ravel(), fw.ravel(), fn.ravel()

        if bounded:
            # exact: drop labels no upstream completion can bring under tau_t
            lower = np.empty(len(c))
            lower.reshape(m, nw + 1)[:, 0] = _min_upstream(upstream[k], fc[:, 0])
            lower.reshape(m, nw + 1)[:, 1:] = _min_upstream(upstream[k], Co * lib)[None, :]
            ok = d + lower <= slack
            if objective == "power":
                a0, b0 = direct[k]
                done = ok & (d + a0 + b0 * c <= tau_t)
                if done.any():
                    w_best = min(w_best, float(w[done].min()))
                ok &= w <= w_best
            c, d, w, nrep, parent, choice = (a[ok] for a in (c, d, w, nrep, parent, choice))
        if prune and len(c):
            if objective == "power":
                keep = pareto_mask(c, d, w, nrep)
            else:
                keep = pareto_mask_2d(c, d, w)
            c, d, w, nrep, parent, choice = (a[keep] for a in (c, d, w, nrep, parent, choice))
        if stats is not None:
            stats.peak_labels = max(stats.peak_labels, len(c))
            stats.total_labels += len(c)
        if max_labels is not None and len(c) > max_labels:
            raise LabelLimitExceeded(f"{len(c)} live labels exceed cap {max_labels}")
        layers.append(_Front(c, d, w, nrep, parent, choice))
        if len(c) == 0:
            break

    span = spans[0]
    d = d + span.self_delay + span.R * c
    c = c + span.C
    final = d + intrinsic + Rs * c / net.w_d
    return final, w, nrep, layers


def _reconstruct(cfg: DPConfig, layers: list[_Front], idx: int, delay: float) -> RepeaterSolution:
    cand = cfg.candidates
    K = len(cand)
    pairs = []
    # layers[j] belongs to candidate K-1-j; walk from the driver side back
    for j in range(len(layers) - 1, -1, -1):
        layer = layers[j]
        ch = int(layer.choice[idx])
        if ch >= 0:
            pairs.append((cand[K - 1 - j], cfg.widths[ch]))
        idx = int(layer.parent[idx])
    return RepeaterSolution.from_pairs(pairs, delay=delay)


def dp_min_power(
    tech: TechParams,
    net: Net,
    cfg: DPConfig,
    tau_t: float,
    *,
    prune: bool = True,
    bound: bool = True,
    max_labels: int | None = None,
    stats: DPStats | None = None,
) -> RepeaterSolution:
    """Minimum total width placement with delay <= tau_t.

    Ties go to the smaller delay, then to fewer repeaters.

    Raises:
        Infeasible: if no placement over ``cfg`` meets ``tau_t``.
        LabelLimitExceeded: if ``max_labels`` is set and exceeded.
    """
    if not tau_t > 0:
        raise ValueError(f"timing target must be > 0, got {tau_t}")
    final, w, nrep, layers = _sweep(tech, net, cfg, "power", tau_t, prune, max_labels, stats, bound)
    ok = np.flatnonzero(final <= tau_t)
    if len(ok) == 0:
        raise Infeasible(f"no placement meets tau_t={tau_t:.6g}s")
    order = np.lexsort([nrep[ok], final[ok], w[ok]])
    best = int(ok[order[0]])
    return _reconstruct(cfg, layers, best, float(final[best]))


def dp_min_delay(
    tech: TechParams,
    net: Net,
    cfg: DPConfig,
    *,
    prune: bool = True,
    max_labels: int | None = None,
    stats: DPStats | None = None,
) -> tuple[RepeaterSolution, float]:
    """Minimum-delay placement over ``cfg``; ties go to the smaller total width."""
    final, w, nrep, layers = _sweep(tech, net, cfg, "delay", math.inf, prune, max_labels, stats)
    order = np.lexsort([nrep, w, final])
    best = int(order[0])
    tau_min = float(final[best])
    return _reconstruct(cfg, layers, best, tau_min), tau_min
