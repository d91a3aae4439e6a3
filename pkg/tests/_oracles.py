"""Independent reference computations used by the test-suite.

Nothing here imports the delay or DP code under test; the oracles only
share the plain data types from ``repins.net``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from repins.net import Net, RepeaterSolution, TechParams, in_forbidden, make_net

TECH = TechParams(R_s=7000.0, C_o=2.0e-15, C_p=1.5e-15)
METAL4 = (0.075, 0.200e-15)
METAL5 = (0.045, 0.250e-15)


# ---------------------------------------------------------------------------
# Generic RC-tree Elmore delay
# ---------------------------------------------------------------------------


class RCTree:
    """Rooted RC tree: node 0 is the ideal source, every other node has a
    resistor to its parent and a grounded capacitor."""

    def __init__(self):
        self.parent = [-1]
        self.res = [0.0]
        self.cap = [0.0]

    def add(self, parent: int, res: float, cap: float = 0.0) -> int:
        self.parent.append(parent)
        self.res.append(res)
        self.cap.append(cap)
        return len(self.parent) - 1

    def add_cap(self, node: int, cap: float) -> None:
        self.cap[node] += cap

    def path(self, node: int) -> set[int]:
        out = set()
        while node > 0:
            out.add(node)
            node = self.parent[node]
        return out

    def elmore(self, sink: int) -> float:
        """Σ_k C_k · (resistance shared by root→k and root→sink)."""
        sink_path = self.path(sink)
        total = 0.0
        for k in range(1, len(self.parent)):
            shared = sum(self.res[e] for e in self.path(k) & sink_path)
            total += self.cap[k] * shared
        return total


def flat_elmore_delay(tech: TechParams, net: Net, sol: RepeaterSolution) -> float:
    """Elmore delay of the net expanded into one RC tree per repeater stage.

    Each driving gate is an ideal step through R_s/w with C_p·w on its output,
    every wire piece between cut points is a π section, and the driven gate is
    C_o·w at the far end.
    """
    cuts = [0.0, *sol.positions, net.length]
    widths = [net.w_d, *sol.widths, net.w_r]
    bounds = [0.0]
    for seg in net.segments:
        bounds.append(bounds[-1] + seg.length)
    total = 0.0
    for i in range(len(cuts) - 1):
        a, b = cuts[i], cuts[i + 1]
        tree = RCTree()
        node = tree.add(0, tech.R_s / widths[i], tech.C_p * widths[i])
        for k, seg in enumerate(net.segments):
            lo, hi = max(a, bounds[k]), min(b, bounds[k + 1])
            if hi <= lo:
                continue
            length = hi - lo
            tree.add_cap(node, 0.5 * seg.c * length)
            node = tree.add(node, seg.r * length, 0.5 * seg.c * length)
        tree.add_cap(node, tech.C_o * widths[i + 1])
        total += tree.elmore(node)
    return total


# ---------------------------------------------------------------------------
# Exhaustive enumeration of discrete placements
# ---------------------------------------------------------------------------


def enumerate_placements(candidates, widths):
    """Every assignment of (nothing | one library width) to each candidate."""
    options = [None, *widths]
    for combo in itertools.product(options, repeat=len(candidates)):
        pairs = [(x, w) for x, w in zip(candidates, combo) if w is not None]
        yield RepeaterSolution.from_pairs(pairs)


def brute_min_power(tech, net, candidates, widths, tau_t):
    """(best total width, its delay) or None when infeasible."""
    best = None
    for sol in enumerate_placements(candidates, widths):
        d = flat_elmore_delay(tech, net, sol)
        if d <= tau_t:
            key = (sol.total_width, d)
            if best is None or key < best:
                best = key
    return best


def brute_min_delay(tech, net, candidates, widths):
    return min(flat_elmore_delay(tech, net, s) for s in enumerate_placements(candidates, widths))


# ---------------------------------------------------------------------------
# Pareto filter
# ---------------------------------------------------------------------------


def quadratic_pareto(points):
    """Indices surviving an O(n²) strict-dominance scan; duplicates keep the first."""
    keep = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if j == i:
                continue
            if all(a <= b for a, b in zip(q, p)) and any(a < b for a, b in zip(q, p)):
                dominated = True
                break
            if q == p and j < i:
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def random_net(rng: np.random.Generator, n_seg=None, zone=True, seg_range=(300.0, 2500.0)) -> Net:
    m = int(rng.integers(1, 6)) if n_seg is None else n_seg
    segs = []
    for k in range(m):
        r, c = METAL4 if rng.random() < 0.5 else METAL5
        # perturb so adjacent segments really differ
        r *= float(rng.uniform(0.5, 2.0))
        c *= float(rng.uniform(0.5, 2.0))
        segs.append((float(rng.uniform(*seg_range)), r, c))
    L = sum(s[0] for s in segs)
    zones = []
    if zone and rng.random() < 0.7:
        zl = float(rng.uniform(0.1, 0.4)) * L
        zs = float(rng.uniform(0, L - zl))
        zones.append((zs, zs + zl))
    return make_net(segs, zones, float(rng.uniform(20, 200)), float(rng.uniform(20, 200)))


def random_positions(rng: np.random.Generator, net: Net, n: int) -> list[float]:
    L = net.length
    xs = set()
    tries = 0
    while len(xs) < n and tries < 1000:
        tries += 1
        x = float(rng.uniform(0.02 * L, 0.98 * L))
        if not in_forbidden(net, x):
            xs.add(x)
    return sorted(xs)


def random_solution(rng: np.random.Generator, net: Net, n: int | None = None) -> RepeaterSolution:
    n = int(rng.integers(0, 6)) if n is None else n
    xs = random_positions(rng, net, n)
    ws = [float(rng.uniform(10, 300)) for _ in xs]
    return RepeaterSolution(tuple(xs), tuple(ws))


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def isclose(a, b, rel):
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0)
