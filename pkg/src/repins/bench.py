"""Randomized net generation, timing sweeps and strategy comparison reports.

Net generation is a fixed sequence of draws from numpy's PCG64 generator
(``numpy.random.default_rng(seed)``), so a seed reproduces the same net on
any platform:

1. segment count ``m``: ``integers(n_min, n_max + 1)``
2. segment lengths: ``uniform(len_min, len_max, size=m)``, rounded to whole µm
3. first layer: ``integers(0, 2)`` (0 = metal4); layers then alternate
4. zone length fraction: ``uniform(zone_min, zone_max)``
5. zone start: ``uniform(0, L - zone_length)``; both zone ends rounded to
   whole µm and kept inside [0, L]
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .delay import meets_target, total_delay
from .dp import DPConfig, Infeasible, dp_min_delay, dp_min_power, width_library, width_range
from .net import Net, RepeaterSolution, TechParams, candidate_grid, make_net, tech_from_dict
from .rip import RipParams, refine_only, rip



def load_default_config() -> dict:
    """The shipped device and layer parameters (representative 0.18µm-class values)."""
    return json.loads(resources.files("repins").joinpath("data/default_tech.json").read_text())


_DEFAULTS = load_default_config()
DEFAULT_TECH = tech_from_dict(_DEFAULTS)
METAL4 = (_DEFAULTS["layers"]["metal4"]["r_ohm_per_um"], _DEFAULTS["layers"]["metal4"]["c_f_per_um"])
METAL5 = (_DEFAULTS["layers"]["metal5"]["r_ohm_per_um"], _DEFAULTS["layers"]["metal5"]["c_f_per_um"])

CSV_COLUMNS = ("net_id", "ratio", "strategy", "feasible", "total_width_u", "delay_s", "runtime_s")


@dataclass(frozen=True)
class GenParams:
    seed: int = 0
    n_segments: tuple[int, int] = (4, 10)
    seg_length: tuple[float, float] = (1000.0, 2500.0)
    zone_fraction: tuple[float, float] = (0.20, 0.40)
    layer_profiles: tuple[tuple[float, float], tuple[float, float]] = (METAL4, METAL5)
    driver_width: float = 100.0
    receiver_width: float = 100.0

    def __post_init__(self) -> None:
        for name in ("n_segments", "seg_length", "zone_fraction"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is reversed")
        if self.n_segments[0] < 1 or self.seg_length[0] <= 0:
            raise ValueError("segment count and lengths must be positive")
        if not (0 <= self.zone_fraction[0] and self.zone_fraction[1] < 1):
            raise ValueError("zone fraction must lie in [0, 1)")
        for r, c in self.layer_profiles:
            if r <= 0 or c <= 0:
                raise ValueError("layer profiles must be positive")


def gen_net(params: GenParams) -> Net:
    """Deterministic random net; see the module docstring for the draw order."""
    rng = np.random.default_rng(params.seed)
    m = int(rng.integers(params.n_segments[0], params.n_segments[1] + 1))
    lengths = np.round(rng.uniform(*params.seg_length, size=m))
    layer = int(rng.integers(0, 2))
    segs = []
    for k in range(m):
        r, c = params.layer_profiles[(layer + k) % 2]
        segs.append((float(lengths[k]), r, c))
    L = float(lengths.sum())
    frac = float(rng.uniform(*params.zone_fraction))
    zone_len = frac * L
    start = float(rng.uniform(0.0, L - zone_len))
    zs = max(0.0, float(round(start)))
    ze = min(L, float(round(start + zone_len)))
    zones = [(zs, ze)] if ze > zs else []
    return make_net(segs, zones, params.driver_width, params.receiver_width)


# ---------------------------------------------------------------------------
# Reference minimum delay
# ---------------------------------------------------------------------------

REFERENCE_WIDTHS = width_range(10.0, 400.0, 10.0)
REFERENCE_LOC_STEP = 50.0


def reference_config(net: Net, widths=REFERENCE_WIDTHS, loc_step=REFERENCE_LOC_STEP) -> DPConfig:
    return DPConfig(widths, tuple(candidate_grid(net, loc_step)))


def compute_tau_min(tech: TechParams, net: Net, reference: DPConfig | None = None) -> float:
    """Minimum delay over the reference library and candidate grid."""
    cfg = reference_config(net) if reference is None else reference
    _, tau = dp_min_delay(tech, net, cfg)
    return tau


def target_ratios(n_targets: int = 20, lo: float = 1.05, hi: float = 2.05) -> list[float]:
    if n_targets < 2:
        raise ValueError("need at least two targets")
    return [float(r) for r in np.linspace(lo, hi, n_targets)]


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    """A named solver: ``solve(tech, net, tau_t)`` returns a solution or raises
    :class:`~repins.dp.Infeasible`."""

    name: str
    solve: Callable[[TechParams, Net, float], RepeaterSolution]


def dp_strategy(name: str, widths: Sequence[float], loc_step: float = 200.0, bound: bool = False) -> Strategy:
    widths = tuple(widths)

    def solve(tech, net, tau_t):
        cfg = DPConfig(widths, tuple(candidate_grid(net, loc_step)))
        return dp_min_power(tech, net, cfg, tau_t, bound=bound)

    return Strategy(name, solve)


# Benchmark runs compare algorithms on the same DP engine: plain Pareto
# label pruning, without the target-aware bound that only the library
# entry points enable by default.
BENCH_RIP = RipParams(dp_bound=False)


def rip_strategy(name: str = "rip", params: RipParams = BENCH_RIP) -> Strategy:
    return Strategy(name, lambda tech, net, tau_t: rip(tech, net, tau_t, params).solution)


def refine_strategy(name: str = "refine", params: RipParams = BENCH_RIP) -> Strategy:
    return Strategy(name, lambda tech, net, tau_t: refine_only(tech, net, tau_t, params).solution)


def parse_strategy(spec: str, rip_params: RipParams = BENCH_RIP, dp_bound: bool = False) -> Strategy:
    """Build a strategy from its id.

    ``rip``, ``refine``, ``dp:MIN:MAX:STEP`` (width range, inclusive) or
    ``dplib:SIZE:GRAN[:MIN]`` (SIZE widths spaced GRAN from MIN, default 10).
    A DP id may end in ``@UM`` to set the candidate spacing (default 200).
    ``dp_bound`` switches on target-aware bound pruning for the DP baselines;
    it is off by default so baselines and RIP share the plain label DP.
    """
    name = spec.strip()
    body, _, loc = name.partition("@")
    loc_step = float(loc) if loc else 200.0
    parts = body.split(":")
    try:
        if body == "rip" and not loc:
            return rip_strategy(name, rip_params)
        if body == "refine" and not loc:
            return refine_strategy(name, rip_params)
        if parts[0] == "dp" and len(parts) == 4:
            lo, hi, step = (float(p) for p in parts[1:])
            return dp_strategy(name, width_range(lo, hi, step), loc_step, dp_bound)
        if parts[0] == "dplib" and len(parts) in (3, 4):
            size = int(parts[1])
            gran = float(parts[2])
            smallest = float(parts[3]) if len(parts) == 4 else 10.0
            return dp_strategy(name, width_library(size, gran, smallest), loc_step, dp_bound)
    except ValueError as exc:
        raise ValueError(f"bad strategy {spec!r}: {exc}") from None
    raise ValueError(f"unknown strategy {spec!r}")


# ---------------------------------------------------------------------------
# Sweeps and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Row:
    net_id: str
    ratio: float
    strategy: str
    feasible: bool
    total_width: float
    delay: float
    runtime: float

    def key(self):
        return (self.net_id, self.ratio, self.strategy)


@dataclass
class SweepReport:
    rows: list[Row] = field(default_factory=list)
    tau_min: dict[str, float] = field(default_factory=dict)
    reference: str = ""

    def extend(self, other: "SweepReport") -> None:
        self.rows.extend(other.rows)
        self.tau_min.update(other.tau_min)
        self.reference = self.reference or other.reference
        self.rows.sort(key=Row.key)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def summary(self, baseline: str = "rip") -> dict:
        return summarize(self.rows, baseline)


def run_cell(tech: TechParams, net: Net, strategy: Strategy, tau_t: float) -> tuple[bool, RepeaterSolution | None, float]:
    """Solve one (net, target, strategy) cell and re-validate the result."""
    t0 = time.perf_counter()
    try:
        sol = strategy.solve(tech, net, tau_t)
    except Infeasible:
        sol = None
    runtime = time.perf_counter() - t0
    if sol is None:
        return False, None, runtime
    delay = total_delay(tech, net, sol)
    sol = RepeaterSolution(sol.positions, sol.widths, delay)
    return meets_target(delay, tau_t), sol, runtime


def sweep(
    tech: TechParams,
    net: Net,
    strategies: Sequence[Strategy],
    n_targets: int = 20,
    net_id: str = "net",
    tau_min: float | None = None,
    reference: DPConfig | None = None,
) -> SweepReport:
    """Run every strategy at n_targets ratios of τ_min between 1.05 and 2.05."""
    ref = reference_config(net) if reference is None else reference
    if tau_min is None:
        tau_min = compute_tau_min(tech, net, ref)
    report = SweepReport(tau_min={net_id: tau_min}, reference=ref.fingerprint())
    for ratio in target_ratios(n_targets):
        tau_t = ratio * tau_min
        for strat in strategies:
            ok, sol, runtime = run_cell(tech, net, strat, tau_t)
            report.rows.append(
                Row(
                    net_id,
                    ratio,
                    strat.name,
                    ok,
                    sol.total_width if sol is not None else math.nan,
                    sol.delay if sol is not None else math.nan,
                    runtime,
                )
            )
    report.rows.sort(key=Row.key)
    return report


def rows_to_csv(rows: Iterable[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(rows, key=Row.key):
        w.writerow(
            [r.net_id, f"{r.ratio:.6f}", r.strategy, int(r.feasible), repr(r.total_width), repr(r.delay), f"{r.runtime:.6f}"]
        )
    return buf.getvalue()


def read_csv(path: str | Path) -> list[Row]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"report is missing columns: {sorted(missing)}")
        for rec in reader:
            rows.append(
                Row(
                    rec["net_id"],
                    float(rec["ratio"]),
                    rec["strategy"],
                    rec["feasible"] in ("1", "True", "true"),
                    float(rec["total_width_u"]),
                    float(rec["delay_s"]),
                    float(rec["runtime_s"]),
                )
            )
    return rows


def saving_percent(w_other: float, w_rip: float) -> float:
    """(W_other - W_rip) / W_other · 100; two empty solutions save nothing."""
    if w_other == 0:
        return 0.0 if w_rip == 0 else -math.inf
    return (w_other - w_rip) / w_other * 100.0


def summarize(rows: Sequence[Row], baseline: str = "rip") -> dict:
    """Per-strategy savings of ``baseline`` over every other strategy.

    Savings use only targets where both are feasible. ``violations`` counts
    the rows where the other strategy failed to meet the target.
    """
    by_key = {r.key(): r for r in rows}
    nets = sorted({r.net_id for r in rows})
    strategies = sorted({r.strategy for r in rows} - {baseline})
    base_rows = [r for r in rows if r.strategy == baseline]
    out = {"baseline": baseline, "nets": len(nets), "strategies": {}}
    for s in strategies:
        per_net = {}
        pooled = []
        for net_id in nets:
            deltas = []
            viol = 0
            base_viol = 0
            n = 0
            for b in (r for r in base_rows if r.net_id == net_id):
                o = by_key.get((net_id, b.ratio, s))
                if o is None:
                    continue
                n += 1
                viol += not o.feasible
                base_viol += not b.feasible
                if o.feasible and b.feasible:
                    d = saving_percent(o.total_width, b.total_width)
                    if math.isfinite(d):
                        deltas.append(d)
            pooled.extend(deltas)
            per_net[net_id] = {
                "targets": n,
                "compared": len(deltas),
                "delta_max": max(deltas) if deltas else math.nan,
                "delta_mean": statistics.fmean(deltas) if deltas else math.nan,
                "violations": viol,
                "baseline_violations": base_viol,
            }
        t_other = [r.runtime for r in rows if r.strategy == s]
        t_base = [r.runtime for r in base_rows]
        valid = [v for v in per_net.values() if v["compared"]]
        out["strategies"][s] = {
            "delta_max": _mean(v["delta_max"] for v in valid),
            "delta_mean": _mean(v["delta_mean"] for v in valid),
            "delta_pooled_mean": statistics.fmean(pooled) if pooled else math.nan,
            "violations_mean": _mean(v["violations"] for v in per_net.values()),
            "violations_total": sum(v["violations"] for v in per_net.values()),
            "baseline_violations_total": sum(v["baseline_violations"] for v in per_net.values()),
            "nets_with_violations": sum(1 for v in per_net.values() if v["violations"]),
            "runtime_mean": _mean(t_other),
            "baseline_runtime_mean": _mean(t_base),
            "speedup": _mean(t_other) / _mean(t_base) if t_base and _mean(t_base) > 0 else math.nan,
            "per_net": per_net,
        }
    return out


def _mean(values) -> float:
    values = list(values)
    return statistics.fmean(values) if values else math.nan


def _sweep_one(args) -> SweepReport:
    net_id, net, tech, specs, n_targets, dp_bound = args
    strategies = [parse_strategy(s, dp_bound=dp_bound) for s in specs]
    return sweep(tech, net, strategies, n_targets, net_id=net_id)


def sweep_many(
    items: Sequence[tuple[str, Net, TechParams]],
    strategy_specs: Sequence[str],
    n_targets: int = 20,
    jobs: int = 1,
    dp_bound: bool = False,
) -> SweepReport:
    """Sweep several nets, optionally one worker process per net.

    Results are merged and sorted by (net_id, ratio, strategy), so the report
    does not depend on ``jobs`` apart from the runtime column.
    """
    for s in strategy_specs:
        parse_strategy(s)
    tasks = [(nid, net, tech, tuple(strategy_specs), n_targets, dp_bound) for nid, net, tech in items]
    report = SweepReport()
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_sweep_one, tasks))
    else:
        parts = [_sweep_one(t) for t in tasks]
    for part in parts:
        report.extend(part)
    return report
