"""Arc-length parameterized reference path and Frenet-frame transforms.

The path is built in two passes: a cubic spline through the waypoints in
chord-length parameter (not-a-knot ends by default, natural on request),
then a re-fit in true arc length on a 0.1 m knot grid plus the waypoint arc
lengths, so every waypoint stays an interpolation node.  All public queries take arc length ``l`` in metres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    DegenerateWaypoints,
    OffsetExceedsRadius,
    OutOfRange,
    PointTooFar,
    ProjectionDiverged,
    TooFewWaypoints,
)

KNOT_SPACING = 0.1
RANGE_SLACK = 1e-9

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class Waypoint(NamedTuple):
    x: float
    y: float


class FrenetPoint(NamedTuple):
    l: float
    d: float


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-8, max_depth: int = 50) -> float:
    """Integrate scalar ``f`` over [a, b] with adaptive Simpson quadrature."""

    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    total = 0.0
    stack = [(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, 0)]
    while stack:
        a_, b_, fa_, fm_, fb_, whole, tol_, depth = stack.pop()
        m_ = 0.5 * (a_ + b_)
        lm, rm = 0.5 * (a_ + m_), 0.5 * (m_ + b_)
        flm, frm = f(lm), f(rm)
        left = simpson(fa_, flm, fm_, m_ - a_)
        right = simpson(fm_, frm, fb_, b_ - m_)
        err = left + right - whole
        if depth >= max_depth or abs(err) <= 15.0 * tol_:
            total += left + right + err / 15.0
        else:
            stack.append((m_, b_, fm_, frm, fb_, right, tol_ / 2.0, depth + 1))
            stack.append((a_, m_, fa_, flm, fm_, left, tol_ / 2.0, depth + 1))
    return total


@dataclass(frozen=True, eq=False)
class ReferencePath:
    """Immutable C2 path ``p(l) = (x_p(l), y_p(l))`` in arc length.

    ``segments`` exposes the per-interval cubic coefficients (highest power
    first, local coordinate ``l - knots[i]``) for x and y respectively.
    """

    sx: CubicSpline
    sy: CubicSpline
    waypoints: np.ndarray
    _seed_l: np.ndarray = field(repr=False)
    _seed_xy: np.ndarray = field(repr=False)

    @property
    def knots(self) -> np.ndarray:
        return self.sx.x

    @property
    def total_length(self) -> float:
        return float(self.sx.x[-1])

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        return self.sx.c, self.sy.c

    # -- vectorized evaluation -------------------------------------------------
    def _check(self, l):
        arr = np.asarray(l, dtype=float)
        L = self.total_length
        if np.any(arr < -RANGE_SLACK) or np.any(arr > L + RANGE_SLACK) or not np.all(np.isfinite(arr)):
            raise OutOfRange(f"arc length outside [0, {L:.3f}]")
        return np.clip(arr, 0.0, L)

    def position(self, l):
        l = self._check(l)
        return self.sx(l), self.sy(l)

    def derivatives(self, l, order: int):
        l = self._check(l)
        return self.sx(l, order), self.sy(l, order)

    def heading(self, l):
        dx, dy = self.derivatives(l, 1)
        phi = np.arctan2(dy, dx)
        return np.where(phi <= -math.pi, math.pi, phi)

    def curvature(self, l):
        l = self._check(l)
        dx, dy = self.sx(l, 1), self.sy(l, 1)
        ddx, ddy = self.sx(l, 2), self.sy(l, 2)
        return (dx * ddy - dy * ddx) / (dx * dx + dy * dy) ** 1.5

    def curvature_rate(self, l):
        """dκ/dl from the spline's third derivatives."""
        l = self._check(l)
        dx, dy = self.sx(l, 1), self.sy(l, 1)
        ddx, ddy = self.sx(l, 2), self.sy(l, 2)
        d3x, d3y = self.sx(l, 3), self.sy(l, 3)
        q = dx * dx + dy * dy
        cross = dx * ddy - dy * ddx
        return (dx * d3y - dy * d3x) / q**1.5 - 3.0 * cross * (dx * ddx + dy * ddy) / q**2.5

    def to_cartesian(self, l, d):
        """Vectorized Frenet -> Cartesian without the osculating-radius check."""
        x, y = self.position(l)
        phi = self.heading(l)
        d = np.asarray(d, dtype=float)
        return x - d * np.sin(phi), y + d * np.cos(phi)


def _validate_waypoints(waypoints) -> np.ndarray:
    pts = np.asarray([(float(p[0]), float(p[1])) for p in waypoints], dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise TooFewWaypoints(f"need at least 3 waypoints, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateWaypoints("waypoints must be finite")
    chords = np.hypot(*np.diff(pts, axis=0).T)
    if np.any(chords <= 1e-9):
        i = int(np.argmin(chords))
        raise DegenerateWaypoints(f"waypoints {i} and {i + 1} coincide")
    return pts


def build_reference(
    waypoints: Sequence, knot_spacing: float = KNOT_SPACING, bc: str = "not-a-knot"
) -> ReferencePath:
    """Fit the reference path through ``waypoints``.

    ``bc`` is the end condition of the chord-length spline.  Natural ends
    force zero curvature at both ends, which bends the end tangents of
    sampled arcs by ~1e-2 rad; not-a-knot keeps them within ~1e-5.
    """
    pts = _validate_waypoints(waypoints)
    chords = np.hypot(*np.diff(pts, axis=0).T)
    u = np.concatenate(([0.0], np.cumsum(chords)))
    cx = CubicSpline(u, pts[:, 0], bc_type=bc)
    cy = CubicSpline(u, pts[:, 1], bc_type=bc)

    def speed(t):
        return math.hypot(float(cx(t, 1)), float(cy(t, 1)))

    seg_len = np.array(
        [adaptive_simpson(speed, u[i], u[i + 1], tol=1e-8 / len(chords)) for i in range(len(chords))]
    )
    s_way = np.concatenate(([0.0], np.cumsum(seg_len)))
    total = float(s_way[-1])

    grid = np.arange(0.0, total, knot_spacing)
    # keep waypoint arc lengths as exact nodes; drop grid nodes crowding them
    near = np.min(np.abs(grid[:, None] - s_way[None, :]), axis=1) < 0.2 * knot_spacing
    sigma = np.union1d(grid[~near], s_way)

    seg_idx = np.clip(np.searchsorted(s_way, sigma, side="right") - 1, 0, len(chords) - 1)
    u_of_sigma = _invert_arc_length(cx, cy, u, s_way, sigma, seg_idx)
    x = cx(u_of_sigma)
    y = cy(u_of_sigma)
    is_way = np.isin(sigma, s_way)
    way_pos = np.searchsorted(s_way, sigma[is_way])
    x[is_way] = pts[way_pos, 0]
    y[is_way] = pts[way_pos, 1]

    def unit_tangent(t):
        tx, ty = float(cx(t, 1)), float(cy(t, 1))
        n = math.hypot(tx, ty)
        return tx / n, ty / n

    t0, t1 = unit_tangent(u[0]), unit_tangent(u[-1])
    sx = CubicSpline(sigma, x, bc_type=((1, t0[0]), (1, t1[0])))
    sy = CubicSpline(sigma, y, bc_type=((1, t0[1]), (1, t1[1])))

    n_seed = max(int(math.ceil(total / 0.5)), 1)
    seed_l = np.linspace(0.0, total, n_seed + 1)
    seed_xy = np.column_stack((sx(seed_l), sy(seed_l)))
    return ReferencePath(sx=sx, sy=sy, waypoints=pts, _seed_l=seed_l, _seed_xy=seed_xy)


def _invert_arc_length(cx, cy, u, s_way, sigma, seg_idx) -> np.ndarray:
    """Chord parameter u at each arc length in ``sigma`` (vectorized Newton)."""
    u0 = u[seg_idx]
    span = u[seg_idx + 1] - u0
    seg_len = s_way[seg_idx + 1] - s_way[seg_idx]
    guess = u0 + (sigma - s_way[seg_idx]) / seg_len * span
    target = sigma - s_way[seg_idx]
    for _ in range(40):
        half = 0.5 * (guess - u0)
        nodes = u0[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
        sp = np.hypot(cx(nodes, 1), cy(nodes, 1))
        partial = half * (sp @ _GL_WEIGHTS)
        resid = partial - target
        step = resid / np.hypot(cx(guess, 1), cy(guess, 1))
        guess = np.clip(guess - step, u0, u0 + span)
        if np.max(np.abs(resid)) < 1e-12:
            break
    return guess


def load_waypoints(path: str | Path) -> list[Waypoint]:
    """Read ``x y`` pairs, one per line; ``#`` starts a comment."""
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'x y', got {raw!r}")
        out.append(Waypoint(float(parts[0]), float(parts[1])))
    return out


# ---------------------------------------------------------------------------
# scalar queries


def curvature_at(path: ReferencePath, sigma: float) -> float:
    return float(path.curvature(sigma))


def heading_at(path: ReferencePath, l: float) -> float:
    return float(path.heading(l))


def frenet_to_cartesian(path: ReferencePath, p: FrenetPoint) -> tuple[float, float]:
    l, d = float(p[0]), float(p[1])
    kappa = curvature_at(path, l)
    if kappa != 0.0 and abs(d) * abs(kappa) >= 1.0:
        raise OffsetExceedsRadius(f"|d|={abs(d):.3f} exceeds radius {1 / abs(kappa):.3f} at l={l:.3f}")
    x, y = path.to_cartesian(l, d)
    return float(x), float(y)


def cartesian_to_frenet(
    path: ReferencePath,
    x: float,
    y: float,
    corridor: float = 50.0,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> FrenetPoint:
    """Closest-point projection: coarse 0.5 m seed grid, then Newton on l."""
    q = np.array([x, y], dtype=float)
    dist = np.hypot(*(path._seed_xy - q).T)
    best = float(dist.min())
    if best > corridor + 0.5:
        raise PointTooFar(f"point ({x:.3f}, {y:.3f}) is {best:.1f} m from the path")
    # every local minimum of the sampled distance close to the best is a seed
    interior = np.r_[True, dist[1:] <= dist[:-1]] & np.r_[dist[:-1] <= dist[1:], True]
    seeds = np.flatnonzero(interior & (dist <= best + 0.5))

    L = path.total_length
    results = []
    for i in seeds:
        l = float(path._seed_l[i])
        for _ in range(max_iter):
            px, py = float(path.sx(l)), float(path.sy(l))
            dx, dy = float(path.sx(l, 1)), float(path.sy(l, 1))
            ddx, ddy = float(path.sx(l, 2)), float(path.sy(l, 2))
            ex, ey = px - x, py - y
            g = ex * dx + ey * dy
            h = dx * dx + dy * dy + ex * ddx + ey * ddy
            step = -g / h if h > 1e-12 else -g
            new_l = min(max(l + step, 0.0), L)
            moved = abs(new_l - l)
            l = new_l
            if moved < tol:
                break
        else:
            raise ProjectionDiverged(f"projection of ({x:.3f}, {y:.3f}) did not converge")
        px, py = float(path.sx(l)), float(path.sy(l))
        results.append((math.hypot(px - x, py - y), l))
    results.sort(key=lambda r: (round(r[0], 12), r[1]))
    dmin, l = results[0]
    if dmin > corridor:
        raise PointTooFar(f"point ({x:.3f}, {y:.3f}) is {dmin:.1f} m from the path")
    phi = heading_at(path, l)
    px, py = float(path.sx(l)), float(path.sy(l))
    d = (x - px) * -math.sin(phi) + (y - py) * math.cos(phi)
    return FrenetPoint(l, d)


# ---------------------------------------------------------------------------
# kinematics


def state_to_frenet(path: ReferencePath, x: float, y: float, theta: float, v: float, a: float = 0.0):
    """Vehicle state -> (l, d, l_dot, d_dot, l_ddot, d_ddot).

    Accelerations use the tangential acceleration only (curvature terms of
    the vehicle path are neglected); planners that need continuity take
    them from the previous plan instead.
    """
    l, d = cartesian_to_frenet(path, x, y)
    phi = heading_at(path, l)
    kappa = curvature_at(path, l)
    dth = theta - phi
    scale = 1.0 - kappa * d
    l_dot = v * math.cos(dth) / scale
    d_dot = v * math.sin(dth)
    return l, d, l_dot, d_dot, a * math.cos(dth) / scale, a * math.sin(dth)


def cartesian_motion(path: ReferencePath, l, l_dot, l_ddot, d, d_dot, d_ddot):
    """Cartesian position, heading, speed and curvature of a Frenet motion.

    Uses X = p(l) + d N(l) with dT/dl = κN, dN/dl = -κT.  Returns arrays
    ``(x, y, heading, speed, kappa)``.
    """
    l = np.asarray(l, dtype=float)
    k = path.curvature(l)
    kp = path.curvature_rate(l)
    phi = path.heading(l)
    x, y = path.to_cartesian(l, d)
    scale = 1.0 - k * d
    vt = l_dot * scale
    vn = d_dot
    at = l_ddot * scale - l_dot * (kp * l_dot * d + k * d_dot) - k * d_dot * l_dot
    an = k * l_dot * l_dot * scale + d_ddot
    speed = np.hypot(vt, vn)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(speed > 1e-9, (vt * an - vn * at) / np.maximum(speed, 1e-9) ** 3, 0.0)
    heading = phi + np.arctan2(vn, vt)
    return x, y, heading, speed, kappa
