"""Multi-layer two-pin nets, forbidden zones and position arithmetic.

Positions are measured in µm from the driver output (x = 0) toward the
receiver (x = total length). Resistances are in ohm, capacitances in farad,
and repeater widths are real multiples of the minimal width ``u``.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class NetValidationError(ValueError):
    """Raised when a net, segment or zone violates its invariants."""


@dataclass(frozen=True)
class TechParams:
    """Unit-width repeater device constants.

    Attributes:
        R_s: Output resistance of a unit-width repeater (ohm·u). A repeater of
            width ``w`` drives with ``R_s / w``.
        C_o: Input capacitance per unit width (F/u).
        C_p: Output (parasitic) capacitance per unit width (F/u).
        u: Minimal repeater width.
    """

    R_s: float
    C_o: float
    C_p: float
    u: float = 1.0

    def __post_init__(self) -> None:
        if not self.R_s > 0:
            raise NetValidationError(f"R_s must be > 0, got {self.R_s}")
        if not self.C_o > 0:
            raise NetValidationError(f"C_o must be > 0, got {self.C_o}")
        if not self.C_p >= 0:
            raise NetValidationError(f"C_p must be >= 0, got {self.C_p}")
        if not self.u > 0:
            raise NetValidationError(f"u must be > 0, got {self.u}")

    @property
    def intrinsic(self) -> float:
        """Width-independent self-loading delay R_s·C_p of any repeater."""
        return self.R_s * self.C_p


@dataclass(frozen=True)
class Segment:
    length: float
    r: float
    c: float


@dataclass(frozen=True)
class ForbiddenZone:
    """Open interval (start, end); repeaters may sit exactly on an endpoint."""

    start: float
    end: float

    def contains(self, x: float) -> bool:
        return self.start < x < self.end


@dataclass(frozen=True)
class Net:
    """A two-pin net made of ordered RC segments, driver side first."""

    segments: tuple[Segment, ...]
    zones: tuple[ForbiddenZone, ...] = ()
    w_d: float = 1.0
    w_r: float = 1.0
    # cumulative segment end positions, filled in __post_init__
    _ends: tuple[float, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "zones", tuple(sorted(self.zones, key=lambda z: z.start)))
        validate_net(self)
        ends = []
        acc = 0.0
        for seg in self.segments:
            acc += seg.length
            ends.append(acc)
        object.__setattr__(self, "_ends", tuple(ends))

    @property
    def length(self) -> float:
        return self._ends[-1]

    @property
    def boundaries(self) -> tuple[float, ...]:
        """Interior segment boundary positions (excludes 0 and the far end)."""
        return self._ends[:-1]

    def segment_starts(self) -> list[float]:
        return [0.0, *self._ends[:-1]]


def validate_net(net: Net) -> None:
    """Check every Net/Segment/ForbiddenZone invariant.

    Raises:
        NetValidationError: naming the first violated invariant.
    """
    if len(net.segments) < 1:
        raise NetValidationError("net needs at least one segment")
    for k, seg in enumerate(net.segments):
        if not seg.length > 0:
            raise NetValidationError(f"segment {k}: length must be > 0, got {seg.length}")
        if not seg.r > 0:
            raise NetValidationError(f"segment {k}: r must be > 0, got {seg.r}")
        if not seg.c > 0:
            raise NetValidationError(f"segment {k}: c must be > 0, got {seg.c}")
    if not net.w_d > 0:
        raise NetValidationError(f"driver width must be > 0, got {net.w_d}")
    if not net.w_r > 0:
        raise NetValidationError(f"receiver width must be > 0, got {net.w_r}")
    total = sum(seg.length for seg in net.segments)
    for z in net.zones:
        if not z.start < z.end:
            raise NetValidationError(f"zone start >= end: ({z.start}, {z.end})")
        if z.start < 0 or z.end > total:
            raise NetValidationError(
                f"zone ({z.start}, {z.end}) outside net of length {total}"
            )
    zones = sorted(net.zones, key=lambda z: z.start)
    for a, b in zip(zones, zones[1:]):
        if b.start < a.end:
            raise NetValidationError(
                f"overlapping zones: ({a.start}, {a.end}) and ({b.start}, {b.end})"
            )


def total_length(net: Net) -> float:
    return net.length


def pieces_between(net: Net, a: float, b: float) -> list[tuple[float, float, float]]:
    """Wire pieces ``(length, r, c)`` covering [a, b], driver side first.

    Zero-length pieces are omitted.
    """
    if a > b:
        raise ValueError(f"pieces_between needs a <= b, got a={a}, b={b}")
    out = []
    if a == b:
        return out
    start = 0.0
    for seg, end in zip(net.segments, net._ends):
        lo = max(a, start)
        hi = min(b, end)
        if hi > lo:
            out.append((hi - lo, seg.r, seg.c))
        if end >= b:
            break
        start = end
    return out


def rc_between(net: Net, a: float, b: float) -> tuple[float, float]:
    """Lumped wire resistance and capacitance between positions a and b."""
    if a > b:
        raise ValueError(f"rc_between needs a <= b, got a={a}, b={b}")
    R = 0.0
    C = 0.0
    for length, r, c in pieces_between(net, a, b):
        R += r * length
        C += c * length
    return R, C


def unit_rc_at(net: Net, x: float, side: str) -> tuple[float, float]:
    """Per-unit-length (r, c) of the segment touching x on the given side.

    At a segment boundary ``left`` is the upstream segment and ``right`` the
    downstream one; elsewhere both sides agree.
    """
    L = net.length
    if not 0 <= x <= L:
        raise ValueError(f"position {x} outside [0, {L}]")
    if side == "right":
        if x >= L:
            raise ValueError("no wire to the right of the receiver")
        k = bisect.bisect_right(net._ends, x)
    elif side == "left":
        if x <= 0:
            raise ValueError("no wire to the left of the driver")
        k = bisect.bisect_left(net._ends, x)
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    seg = net.segments[k]
    return seg.r, seg.c


def in_forbidden(net: Net, x: float) -> bool:
    return any(z.contains(x) for z in net.zones)


def candidate_grid(net: Net, step: float) -> list[float]:
    """Positions step, 2·step, ... strictly inside (0, L), minus forbidden ones."""
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    L = net.length
    out = []
    k = 1
    while True:
        x = k * step
        if x >= L:
            break
        if not in_forbidden(net, x):
            out.append(x)
        k += 1
    return out


def make_net(
    segments: Iterable[tuple[float, float, float]],
    zones: Iterable[tuple[float, float]] = (),
    w_d: float = 1.0,
    w_r: float = 1.0,
) -> Net:
    """Convenience constructor from plain tuples."""
    return Net(
        segments=tuple(Segment(*s) for s in segments),
        zones=tuple(ForbiddenZone(*z) for z in zones),
        w_d=w_d,
        w_r=w_r,
    )


# ---------------------------------------------------------------------------
# Net specification files
# ---------------------------------------------------------------------------


def tech_to_dict(tech: TechParams) -> dict:
    return {
        "r_s_ohm": tech.R_s,
        "c_o_f_per_u": tech.C_o,
        "c_p_f_per_u": tech.C_p,
        "u": tech.u,
    }


def tech_from_dict(d: dict) -> TechParams:
    return TechParams(
        R_s=float(d["r_s_ohm"]),
        C_o=float(d["c_o_f_per_u"]),
        C_p=float(d["c_p_f_per_u"]),
        u=float(d.get("u", 1.0)),
    )


def net_to_dict(net: Net, tech: TechParams) -> dict:
    return {
        "tech": tech_to_dict(tech),
        "segments": [
            {"length_um": s.length, "r_ohm_per_um": s.r, "c_f_per_um": s.c}
            for s in net.segments
        ],
        "forbidden": [{"start_um": z.start, "end_um": z.end} for z in net.zones],
        "driver_width_u": net.w_d,
        "receiver_width_u": net.w_r,
    }


def net_from_dict(d: dict) -> tuple[Net, TechParams]:
    try:
        tech = tech_from_dict(d["tech"])
        net = Net(
            segments=tuple(
                Segment(float(s["length_um"]), float(s["r_ohm_per_um"]), float(s["c_f_per_um"]))
                for s in d["segments"]
            ),
            zones=tuple(
                ForbiddenZone(float(z["start_um"]), float(z["end_um"]))
                for z in d.get("forbidden", [])
            ),
            w_d=float(d["driver_width_u"]),
            w_r=float(d["receiver_width_u"]),
        )
    except KeyError as exc:
        raise NetValidationError(f"net file missing field {exc.args[0]!r}") from None
    return net, tech


def dump_net(net: Net, tech: TechParams, path: str | Path) -> None:
    text = json.dumps(net_to_dict(net, tech), indent=2, sort_keys=False)
    Path(path).write_text(text + "\n")


def load_net(path: str | Path) -> tuple[Net, TechParams]:
    return net_from_dict(json.loads(Path(path).read_text()))


def check_positions(net: Net, xs: Sequence[float]) -> None:
    """Raise ValueError unless xs is strictly increasing, inside (0, L) and legal."""
    L = net.length
    prev = 0.0
    for i, x in enumerate(xs):
        if not 0 < x < L:
            raise ValueError(f"repeater {i} at {x} outside (0, {L})")
        if i and not x > prev:
            raise ValueError(f"repeater positions not strictly increasing at index {i}")
        if in_forbidden(net, x):
            raise ValueError(f"repeater {i} at {x} inside a forbidden zone")
        prev = x


@dataclass(frozen=True)
class RepeaterSolution:
    """Repeater positions (µm) and widths (multiples of u), driver side first.

    ``delay`` is whatever evaluation produced the solution; use
    :func:`repins.delay.evaluate` to obtain a copy with a recomputed delay.
    """

    positions: tuple[float, ...] = ()
    widths: tuple[float, ...] = ()
    delay: float = math.nan

    def __post_init__(self) -> None:
        object.__setattr__(self, "positions", tuple(float(x) for x in self.positions))
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
        if len(self.positions) != len(self.widths):
            raise ValueError("positions and widths differ in length")
        for i, w in enumerate(self.widths):
            if not w > 0:
                raise ValueError(f"repeater {i} has non-positive width {w}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], delay: float = math.nan):
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), delay)

    @property
    def repeaters(self) -> list[tuple[float, float]]:
        return list(zip(self.positions, self.widths))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def total_width(self) -> float:
        return math.fsum(self.widths)
