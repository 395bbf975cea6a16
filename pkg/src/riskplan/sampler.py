"""Quintic boundary-value polynomials and the end-state candidate grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .errors import IllConditioned, OutOfRange

MIN_DURATION = 0.1  # s, conditioning floor for the 6x6 solve
BC_TOL = 1e-9


class BoundaryCondition(NamedTuple):
    g_i: float
    g_i_dot: float
    g_i_ddot: float
    g_f: float
    g_f_dot: float
    g_f_ddot: float


class FrenetState(NamedTuple):
    l: float
    l_dot: float
    l_ddot: float
    d: float
    d_dot: float
    d_ddot: float


@dataclass(frozen=True)
class Quintic:
    """g(t) = sum b_k (t - t_i)^k on [t_i, t_f]."""

    b: tuple
    t_i: float
    t_f: float

    @property
    def duration(self) -> float:
        return self.t_f - self.t_i

    def _local(self, t, extend: bool):
        t = np.asarray(t, dtype=float)
        if not extend and (np.any(t < self.t_i - 1e-9) or np.any(t > self.t_f + 1e-9)):
            raise OutOfRange(f"t outside [{self.t_i}, {self.t_f}]")
        return t - self.t_i

    def __call__(self, t, order: int = 0):
        return eval_quintic(self, t, order)

    def extended(self, t, order: int = 0):
        """Evaluate, continuing past t_f at constant terminal velocity."""
        tau = np.asarray(t, dtype=float) - self.t_i
        T = self.duration
        inside = np.clip(tau, 0.0, T)
        val = _horner(self.b, inside, order)
        past = tau - inside
        if order == 0:
            return (val + past * _horner(self.b, T, 1))[()]
        if order == 1:
            return np.where(past > 0, _horner(self.b, T, 1), val)[()]
        return np.where(past > 0, 0.0, val)[()]


def _deriv_coeffs(b, order: int) -> list[float]:
    c = list(b)
    for _ in range(order):
        c = [k * c[k] for k in range(1, len(c))]
    return c or [0.0]


def _horner(b, tau, order: int):
    c = _deriv_coeffs(b, order)
    acc = np.zeros_like(np.asarray(tau, dtype=float)) + c[-1]
    for coef in reversed(c[:-1]):
        acc = acc * tau + coef
    return acc


def boundary_matrix(t_i: float, t_f: float) -> np.ndarray:
    """The 6x6 position/velocity/acceleration matrix at t_i and t_f."""
    rows = []
    for t in (t_i, t_f):
        rows.append([1, t, t**2, t**3, t**4, t**5])
        rows.append([0, 1, 2 * t, 3 * t**2, 4 * t**3, 5 * t**4])
        rows.append([0, 0, 2, 6 * t, 12 * t**2, 20 * t**3])
    return np.array(rows, dtype=float)


def solve_quintic(bc: BoundaryCondition, t_i: float, t_f: float) -> Quintic:
    """Unique quintic meeting position, velocity and acceleration at both ends.

    Solved in local time (t - t_i) so the matrix entries stay O(T^5).
    """
    T = t_f - t_i
    if not T >= MIN_DURATION:
        raise IllConditioned(f"duration {T:.4g} s below the {MIN_DURATION} s floor")
    M = boundary_matrix(0.0, T)
    rhs = np.array([bc.g_i, bc.g_i_dot, bc.g_i_ddot, bc.g_f, bc.g_f_dot, bc.g_f_ddot], dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise IllConditioned("non-finite boundary values")
    b = np.linalg.solve(M, rhs)
    q = Quintic(tuple(float(v) for v in b), float(t_i), float(t_f))
    resid = boundary_residuals(q, bc)
    if np.max(resid) > BC_TOL:
        raise IllConditioned(f"boundary residual {np.max(resid):.3g} above {BC_TOL}")
    return q


def boundary_residuals(q: Quintic, bc: BoundaryCondition) -> np.ndarray:
    vals = [eval_quintic(q, t, k) for t in (q.t_i, q.t_f) for k in range(3)]
    return np.abs(np.array(vals, dtype=float) - np.array(bc, dtype=float))


def eval_quintic(q: Quintic, t, order: int = 0):
    if not 0 <= order <= 4:
        raise ValueError("order must be in 0..4")
    return _horner(q.b, q._local(t, extend=False), order)[()]


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SamplingDomain:
    l_range: tuple[float, float]
    d_range: tuple[float, float]
    tau_range: tuple[float, float]
    counts: tuple[int, int, int] = (5, 3, 3)

    def __post_init__(self):
        for lo, hi in (self.l_range, self.d_range, self.tau_range):
            if lo > hi:
                raise ValueError("sampling range min exceeds max")
        if min(self.counts) < 1:
            raise ValueError("sampling counts must be >= 1")

    @property
    def size(self) -> int:
        return self.counts[0] * self.counts[1] * self.counts[2]


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n)


def sample_end_states(dom: SamplingDomain) -> list[tuple[float, float, float]]:
    """Full grid, lexicographic in (l, d, tau); single-count axes use midpoints."""
    ls = _axis(*dom.l_range, dom.counts[0])
    ds = _axis(*dom.d_range, dom.counts[1])
    ts = _axis(*dom.tau_range, dom.counts[2])
    return [(float(l), float(d), float(t)) for l in ls for d in ds for t in ts]


@dataclass
class CostBreakdown:
    j_s: float
    j_h: float
    j_e: float
    j_c: float
    j_t: float
    e_t: float
    total: float
    violated: Optional[str] = None


@dataclass
class CandidateTrajectory:
    lon: Quintic
    lat: Quintic
    end_state: tuple[float, float, float]
    index: int = 0
    cost: Optional[CostBreakdown] = None
    feasible: bool = True
    violation: Optional[str] = None

    @property
    def t_i(self) -> float:
        return self.lon.t_i

    @property
    def t_f(self) -> float:
        return self.lon.t_f

    @property
    def duration(self) -> float:
        return self.lon.duration

    def frenet(self, t, extend: bool = False):
        """(l, l_dot, l_ddot, d, d_dot, d_ddot) arrays at times ``t``."""
        if extend:
            f = lambda q, k: q.extended(t, k)  # noqa: E731
        else:
            f = lambda q, k: eval_quintic(q, t, k)  # noqa: E731
        return tuple(np.asarray(f(q, k), dtype=float) for q in (self.lon, self.lat) for k in range(3))


@dataclass
class CandidateSet:
    candidates: list[CandidateTrajectory] = field(default_factory=list)
    dropped: list[tuple[int, tuple, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]


TerminalPolicy = Union[str, Callable[[FrenetState, float, float], float]]


def terminal_speed(policy: TerminalPolicy, start: FrenetState, l_e: float, tau: float, v_target: float) -> float:
    """Terminal longitudinal speed for an end state.

    ``"target"`` always ends at ``v_target``.  ``"kinematic"`` ends at the
    speed a constant-acceleration profile covering ``l_e - l`` in ``tau``
    would reach, clipped at zero.
    """
    if callable(policy):
        return float(policy(start, l_e, tau))
    if policy == "target":
        return float(v_target)
    if policy == "kinematic":
        return max(2.0 * (l_e - start.l) / tau - start.l_dot, 0.0)
    raise ValueError(f"unknown terminal policy {policy!r}")


def generate_candidates(
    start: FrenetState,
    dom: SamplingDomain,
    terminal_policy: TerminalPolicy = "target",
    v_target: float = 0.0,
    t_i: float = 0.0,
) -> CandidateSet:
    out = CandidateSet()
    for idx, (l_e, d_e, tau) in enumerate(sample_end_states(dom)):
        try:
            v_e = terminal_speed(terminal_policy, start, l_e, tau, v_target)
            lon = solve_quintic(BoundaryCondition(start.l, start.l_dot, start.l_ddot, l_e, v_e, 0.0), t_i, t_i + tau)
            lat = solve_quintic(BoundaryCondition(start.d, start.d_dot, start.d_ddot, d_e, 0.0, 0.0), t_i, t_i + tau)
        except IllConditioned as exc:
            out.dropped.append((idx, (l_e, d_e, tau), str(exc)))
            continue
        out.candidates.append(CandidateTrajectory(lon=lon, lat=lat, end_state=(l_e, d_e, tau), index=idx))
    return out
