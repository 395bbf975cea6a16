"""Kinematic summary metrics of an executed run."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import ManeuverNotCompleted

MANEUVER_THRESHOLD = 0.2  # m


@dataclass(frozen=True)
class MetricReport:
    x_a: float
    y_a: float
    x_j: float
    y_j: float
    T: Optional[float]
    collided: bool
    max_curvature: float
    completed: bool = True

    def row(self) -> dict:
        return asdict(self)


def finite_difference_means(vel: np.ndarray, dt: float) -> tuple[float, float]:
    """Mean |acceleration| and mean |jerk| from velocity samples.

    Central differences; the acceleration series is differenced again for jerk.
    """
    vel = np.asarray(vel, dtype=float)
    if vel.size < 3:
        return 0.0, 0.0
    acc = (vel[2:] - vel[:-2]) / (2.0 * dt)
    jerk = (vel[2:] - 2.0 * vel[1:-1] + vel[:-2]) / (dt * dt)
    return float(np.mean(np.abs(acc))), float(np.mean(np.abs(jerk)))


def maneuver_window(d: np.ndarray, d_start: float, complete_index: Optional[int]) -> tuple[Optional[int], Optional[int]]:
    dev = np.flatnonzero(np.abs(np.asarray(d) - d_start) > MANEUVER_THRESHOLD)
    start = int(dev[0]) if dev.size else None
    return start, complete_index


def compute_metrics(
    t: np.ndarray,
    l_dot: np.ndarray,
    d_dot: np.ndarray,
    d: np.ndarray,
    curvature: np.ndarray,
    collided: bool,
    complete_index: Optional[int],
    lateral_maneuver: bool = True,
    strict: bool = False,
) -> MetricReport:
    """Means over the maneuver window; T from maneuver start to completion.

    A lateral maneuver starts at the first sample deviating more than 0.2 m
    from the initial offset.  Without a lateral maneuver the window starts at
    the first sample.  An unfinished maneuver uses the whole log and reports
    ``T = None``; with ``strict`` it raises ManeuverNotCompleted instead.
    """
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        raise ValueError("empty log")
    dt = float(t[1] - t[0]) if t.size > 1 else 0.1
    start = 0
    if lateral_maneuver:
        s, _ = maneuver_window(d, float(d[0]), complete_index)
        if s is not None:
            start = s
    completed = complete_index is not None
    if completed:
        start = min(start, complete_index)
        lo, hi = start, complete_index + 1
        T = float(t[complete_index] - t[start])
    else:
        if strict:
            raise ManeuverNotCompleted("maneuver not completed within the run")
        lo, hi, T = 0, t.size, None
    lo = max(lo - 1, 0)  # include the neighbour so central differences cover the window
    hi = min(hi + 1, t.size)
    xa, xj = finite_difference_means(np.asarray(l_dot)[lo:hi], dt)
    ya, yj = finite_difference_means(np.asarray(d_dot)[lo:hi], dt)
    kmax = float(np.max(np.abs(curvature))) if len(curvature) else 0.0
    return MetricReport(xa, ya, xj, yj, T, bool(collided), kmax, completed)

