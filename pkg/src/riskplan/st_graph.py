"""Space-time (ST) graph along the ego reference path.

Obstacle predictions become blocked longitudinal intervals per timestep.
The free space at each step can split into several gaps; a gap graph links
gaps reachable under ``[v_min, v_max]`` motion and the corridor follows the
path that maximizes terminal progress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidHorizon, NoFeasibleCorridor
from .prediction import ObstacleState, predict_position

Interval = tuple[float, float]


def buffer_at(t: float, eps0: float = 2.0, eps_rate: float = 0.25) -> float:
    """Affine uncertainty buffer eps0 + eps_rate * t."""
    return eps0 + eps_rate * max(t, 0.0)


def st_times(T_max: float, dt: float) -> np.ndarray:
    if not T_max > 0 or not dt > 0:
        raise InvalidHorizon(f"T_max={T_max}, dt={dt}")
    n = int(math.floor(T_max / dt + 1e-9))
    return np.arange(n + 1) * dt


# ---------------------------------------------------------------------------
# lane-conflict projections: obstacle arc-length interval -> ego arc-length


@dataclass(frozen=True)
class SameLane:
    """Obstacle shares the ego path's arc length (parallel lane or same lane).

    With ``lateral`` and ``gate`` set, the obstacle only blocks while the
    ego's lateral offset is within ``gate`` of the obstacle's lane.
    """

    offset: float = 0.0
    lateral: Optional[float] = None
    gate: float = math.inf

    def map(self, lo: float, hi: float, ego_d: Optional[float]) -> Optional[Interval]:
        if ego_d is not None and self.lateral is not None and abs(ego_d - self.lateral) >= self.gate:
            return None
        return lo + self.offset, hi + self.offset


@dataclass(frozen=True)
class NoConflict:
    def map(self, lo: float, hi: float, ego_d: Optional[float]) -> Optional[Interval]:
        return None


@dataclass(frozen=True)
class PathConflict:
    """Obstacle travels its own path; samples of it that come close to the
    ego path are tabulated as (obstacle s, ego l, ego-frame d)."""

    s: np.ndarray
    l: np.ndarray
    d: np.ndarray
    half_width: float
    gate: float

    def map(self, lo: float, hi: float, ego_d: Optional[float]) -> Optional[Interval]:
        ref = 0.0 if ego_d is None else ego_d
        m = (self.s >= lo) & (self.s <= hi) & (np.abs(self.d - ref) < self.gate)
        if not np.any(m):
            return None
        return float(self.l[m].min()) - self.half_width, float(self.l[m].max()) + self.half_width


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StRegion:
    obstacle_id: str
    t: np.ndarray
    s_min: np.ndarray
    s_max: np.ndarray

    @property
    def empty(self) -> bool:
        return len(self.t) == 0


@dataclass(frozen=True)
class SafeCorridor:
    times: np.ndarray
    bounds: np.ndarray  # (K, 2): s_min, s_max per time
    gaps: tuple = ()  # all free gaps per step, for plotting/diagnostics

    def bounds_at(self, t):
        """Linearly interpolated (s_min, s_max) at ``t``."""
        return (
            np.interp(t, self.times, self.bounds[:, 0]),
            np.interp(t, self.times, self.bounds[:, 1]),
        )

    def contains(self, s, tol: float = 0.0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return (s >= self.bounds[:, 0] - tol) & (s <= self.bounds[:, 1] + tol)


def build_region(
    o: ObstacleState,
    projection,
    T_max: float,
    dt: float,
    eps0: float = 2.0,
    eps_rate: float = 0.25,
    ego_half_length: float = 0.0,
    t0: float = 0.0,
    ego_lateral: Optional[Callable[[float], float]] = None,
    obstacle_id: str = "",
    positions: Optional[np.ndarray] = None,
) -> StRegion:
    """Buffered ST occupancy of one obstacle, mapped onto ego arc length.

    ``t0`` is the absolute time of ST time zero (the obstacle state refers to
    absolute time 0); ``ego_lateral`` optionally gives the ego's planned
    lateral offset so lane projections can switch on and off.  ``positions``
    may carry the obstacle's predicted positions at the ST times.
    """
    times = st_times(T_max, dt)
    if positions is None:
        positions = np.array([predict_position(o, t0 + float(t)) for t in times])
    ts, lo_out, hi_out = [], [], []
    for t, s in zip(times, positions):
        t = float(t)
        eps = buffer_at(t, eps0, eps_rate)
        lo, hi = s - eps - 0.5 * o.length, s + eps + 0.5 * o.length
        mapped = projection.map(lo, hi, None if ego_lateral is None else ego_lateral(t))
        if mapped is None:
            continue
        ts.append(t)
        lo_out.append(mapped[0] - ego_half_length)
        hi_out.append(mapped[1] + ego_half_length)
    return StRegion(obstacle_id or o.name, np.array(ts), np.array(lo_out), np.array(hi_out))


def merge_intervals(intervals: Sequence[Interval]) -> list[Interval]:
    out: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(a, b) for a, b in out]


def aggregate(regions: Sequence[StRegion], T_max: float, dt: float) -> list[list[Interval]]:
    """Per-timestep union of blocked intervals (sorted, merged)."""
    times = st_times(T_max, dt)
    per_step: list[list[Interval]] = [[] for _ in times]
    for r in regions:
        for t, lo, hi in zip(r.t, r.s_min, r.s_max):
            k = int(round(t / dt))
            if 0 <= k < len(times):
                per_step[k].append((float(lo), float(hi)))
    return [merge_intervals(iv) for iv in per_step]


def free_gaps(blocked: Sequence[Interval], s_domain: Interval) -> list[Interval]:
    lo, hi = s_domain
    gaps = []
    cur = lo
    for b_lo, b_hi in blocked:
        if b_hi <= cur:
            continue
        if b_lo > cur:
            gaps.append((cur, min(b_lo, hi)))
        cur = max(cur, b_hi)
        if cur >= hi:
            break
    if cur < hi:
        gaps.append((cur, hi))
    return [g for g in gaps if g[1] - g[0] > 1e-9]


def gaps_connected(a: Interval, b: Interval, dt: float, v_min: float, v_max: float) -> bool:
    """Whether some point of ``a`` can move into ``b`` within one step."""
    return a[0] + v_min * dt <= b[1] and a[1] + v_max * dt >= b[0]


def _step_into(r: Interval, g: Interval, dt: float, v_min: float, v_max: float) -> Optional[Interval]:
    lo, hi = max(r[0] + v_min * dt, g[0]), min(r[1] + v_max * dt, g[1])
    return (lo, hi) if lo <= hi else None


def _advance_set(rs: Sequence[Interval], g: Interval, dt: float, v_min: float, v_max: float) -> list[Interval]:
    """Points of gap ``g`` reachable in one step from the interval union ``rs``."""
    pieces = [p for p in (_step_into(r, g, dt, v_min, v_max) for r in rs) if p is not None]
    return merge_intervals(pieces)


def _intersect(rs: Sequence[Interval], qs: Sequence[Interval]) -> list[Interval]:
    out = []
    for a, b in rs:
        for c, d in qs:
            lo, hi = max(a, c), min(b, d)
            if lo <= hi:
                out.append((lo, hi))
    return merge_intervals(out)


def reachable_sets(gaps, s_now: float, dt: float, v_min: float, v_max: float) -> list[dict]:
    """Per step, the reachable part of each reachable gap (a union of intervals).

    Starting from ``s_now`` and moving with speed in ``[v_min, v_max]``
    while staying in free space.
    """
    reach = [{j: [(s_now, s_now)] for j, g in enumerate(gaps[0]) if g[0] <= s_now <= g[1]}]
    for k in range(1, len(gaps)):
        prev = merge_intervals([iv for rs in reach[-1].values() for iv in rs])
        cur = {}
        for j, g in enumerate(gaps[k]):
            rs = _advance_set(prev, g, dt, v_min, v_max)
            if rs:
                cur[j] = rs
        reach.append(cur)
        if not cur:
            break
    return reach


def safe_corridor(
    blocked: Sequence[Sequence[Interval]],
    s_now: float,
    s_domain: Interval,
    T_max: float,
    dt: float,
    v_min: float = 0.0,
    v_max: float = 40.0,
    v_target: Optional[float] = None,
) -> SafeCorridor:
    """Pick one free gap per timestep.

    A gap sequence is admissible when some motion from ``s_now`` with speed
    in ``[v_min, v_max]`` stays inside it at every step.  Among admissible
    sequences the choice is the best one compared from the last step
    backwards: larger upper bound, then the gap holding the
    constant-target-speed position, then the lower index.
    """
    times = st_times(T_max, dt)
    if len(blocked) != len(times):
        raise InvalidHorizon("blocked intervals do not match the ST grid")
    if not (s_domain[0] <= s_now <= s_domain[1]):
        raise NoFeasibleCorridor(f"s_now={s_now} outside the domain")
    gaps = [free_gaps(b, s_domain) for b in blocked]
    reach = reachable_sets(gaps, s_now, dt, v_min, v_max)
    if not reach[0]:
        raise NoFeasibleCorridor("ego position is blocked at t = 0")
    if len(reach) < len(times) or not reach[-1]:
        k = len(reach) - 1
        raise NoFeasibleCorridor(f"no reachable gap at t = {times[k]:.2f} s")

    def key(k: int, j: int) -> tuple:
        g = gaps[k][j]
        hit = v_target is not None and g[0] <= s_now + v_target * times[k] <= g[1]
        return (g[1], hit, -j)

    K = len(times) - 1
    chosen = [0] * (K + 1)
    chosen[K] = max(reach[K], key=lambda j: key(K, j))
    # points of the chosen gap that are reachable and can still follow the chosen suffix
    need = reach[K][chosen[K]]
    for k in range(K - 1, -1, -1):
        pre = merge_intervals([(lo - v_max * dt, hi - v_min * dt) for lo, hi in need])
        options = {i: _intersect(rs, pre) for i, rs in reach[k].items()}
        options = {i: rs for i, rs in options.items() if rs}
        chosen[k] = max(options, key=lambda j: key(k, j))
        need = options[chosen[k]]
    bounds = np.array([gaps[k][chosen[k]] for k in range(K + 1)], dtype=float)
    return SafeCorridor(times=times, bounds=bounds, gaps=tuple(tuple(g) for g in gaps))


def dump_st_csv(path, times, blocked, corridor: Optional[SafeCorridor]) -> None:
    from .output import format_float

    lines = ["t,blocked,s_min,s_max"]
    for k, t in enumerate(times):
        iv = ";".join(f"{format_float(a)}:{format_float(b)}" for a, b in blocked[k])
        if corridor is not None:
            lo, hi = corridor.bounds[k]
            lines.append(f"{format_float(t)},{iv},{format_float(lo)},{format_float(hi)}")
        else:
            lines.append(f"{format_float(t)},{iv},,")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
