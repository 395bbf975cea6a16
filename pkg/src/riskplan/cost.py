"""Trajectory objective (six weighted terms), hard limits and selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AllInfeasible
from .frenet import ReferencePath, cartesian_motion
from .hazard import HazardScene, total_hazard
from .sampler import CandidateTrajectory, CostBreakdown

DEFAULT_DT = 0.02
MIN_SPEED_FOR_CURVATURE = 0.5  # m/s; path curvature is meaningless when nearly stopped

RefTrajectory = Callable[[np.ndarray], tuple]

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class CostWeights:
    w_s: float = 1.0
    w_h: float = 10.0
    w_e: float = 1.0
    w_c: float = 1.0
    w_t: float = 0.5
    w_tr: float = 2.0
    speed_deviation_weight: float = 0.1
    v_target: float = 10.0

    def __post_init__(self):
        if min(self.w_s, self.w_h, self.w_e, self.w_c, self.w_t, self.w_tr, self.speed_deviation_weight) < 0:
            raise ValueError("cost weights must be non-negative")

    def scaled(self, k: float) -> "CostWeights":
        return CostWeights(
            self.w_s * k, self.w_h * k, self.w_e * k, self.w_c * k, self.w_t * k, self.w_tr * k,
            self.speed_deviation_weight, self.v_target,
        )


@dataclass(frozen=True)
class FeasibilityLimits:
    v_min: float = 0.0
    v_max: float = 35.0
    a_l_max: float = 4.0
    a_d_max: float = 3.0
    kappa_max: float = 0.1
    h_max: float = 8.0

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if min(self.a_l_max, self.a_d_max, self.kappa_max, self.h_max) <= 0:
            raise ValueError("limits must be positive")


def sample_times(c: CandidateTrajectory, dt: float) -> np.ndarray:
    n = max(int(math.ceil(c.duration / dt - 1e-9)), 1)
    return np.linspace(c.t_i, c.t_f, n + 1)


def _derivs(c: CandidateTrajectory, t: np.ndarray, order: int):
    return c.lon(t, order), c.lat(t, order)


def smoothness_cost(c: CandidateTrajectory, dt: float = DEFAULT_DT) -> float:
    """Integral of squared longitudinal and lateral jerk."""
    t = sample_times(c, dt)
    jl, jd = _derivs(c, t, 3)
    return float(_trapz(jl * jl + jd * jd, t))


def comfort_cost(c: CandidateTrajectory, dt: float = DEFAULT_DT) -> float:
    """Integral of squared longitudinal and lateral acceleration."""
    t = sample_times(c, dt)
    al, ad = _derivs(c, t, 2)
    return float(_trapz(al * al + ad * ad, t))


def hazard_cost(
    c: CandidateTrajectory,
    scene: HazardScene,
    ego_v_profile: Optional[Callable] = None,
    dt: float = DEFAULT_DT,
) -> float:
    """Integral of the hazard field along the candidate.

    Candidate time is the scene's tau.  The ego speed entering the relative
    velocity defaults to the candidate's own longitudinal speed.
    """
    t = sample_times(c, dt)
    l, d = c.lon(t), c.lat(t)
    v = c.lon(t, 1) if ego_v_profile is None else ego_v_profile(t)
    return float(_trapz(total_hazard(scene, v, l, d, t), t))


def efficiency_cost(c: CandidateTrajectory, weights: CostWeights, dt: float = DEFAULT_DT) -> float:
    t = sample_times(c, dt)
    vl, vd = _derivs(c, t, 1)
    dev = weights.v_target - np.hypot(vl, vd)
    return float(c.duration + weights.speed_deviation_weight * _trapz(dev * dev, t))


def time_cost(c: CandidateTrajectory, dt: float = DEFAULT_DT) -> float:
    # N steps of dt, normalized so the value is the duration for any dt
    n = len(sample_times(c, dt)) - 1
    return float(n * (c.duration / n))


def tracking_error(c: CandidateTrajectory, ref: Optional[RefTrajectory], dt: float = DEFAULT_DT) -> float:
    """Integral of squared (l, d) deviation from ``ref(t) -> (l_ref, d_ref)``."""
    if ref is None:
        return 0.0
    t = sample_times(c, dt)
    l_ref, d_ref = ref(t)
    el = c.lon(t) - l_ref
    ed = c.lat(t) - d_ref
    return float(_trapz(el * el + ed * ed, t))


def evaluate(
    c: CandidateTrajectory,
    weights: CostWeights,
    scene: HazardScene,
    ref: Optional[RefTrajectory] = None,
    dt: float = DEFAULT_DT,
) -> CostBreakdown:
    terms = dict(
        j_s=smoothness_cost(c, dt),
        j_h=hazard_cost(c, scene, None, dt),
        j_e=efficiency_cost(c, weights, dt),
        j_c=comfort_cost(c, dt),
        j_t=time_cost(c, dt),
        e_t=tracking_error(c, ref, dt),
    )
    total = (
        weights.w_s * terms["j_s"]
        + weights.w_h * terms["j_h"]
        + weights.w_e * terms["j_e"]
        + weights.w_c * terms["j_c"]
        + weights.w_t * terms["j_t"]
        + weights.w_tr * terms["e_t"]
    )
    c.cost = CostBreakdown(total=total, violated=c.violation, **terms)
    return c.cost


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    violation: Optional[str] = None
    t: Optional[float] = None
    magnitude: float = 0.0


FAMILIES = ("speed", "accel_lon", "accel_lat", "curvature", "hazard")


def violation_profile(
    c: CandidateTrajectory,
    limits: FeasibilityLimits,
    scene: Optional[HazardScene],
    path: Optional[ReferencePath],
    dt: float = DEFAULT_DT,
):
    """Per-sample violation magnitude of every constraint family (>0 = violated)."""
    t = sample_times(c, dt)
    l, vl, al, d, vd, ad = c.frenet(t)
    speed = np.hypot(vl, vd)
    v_viol = np.maximum.reduce([limits.v_min - speed, speed - limits.v_max, -vl])
    if path is not None:
        lc = np.clip(l, 0.0, path.total_length)
        *_, cart_speed, kappa = cartesian_motion(path, lc, vl, al, d, vd, ad)
    else:
        cart_speed = speed
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa = np.where(speed > 1e-9, (vl * ad - vd * al) / np.maximum(speed, 1e-9) ** 3, 0.0)
    k_viol = np.where(cart_speed > MIN_SPEED_FOR_CURVATURE, np.abs(kappa) - limits.kappa_max, -1.0)
    if scene is not None:
        h = total_hazard(scene, vl, l, d, t)
        h_viol = np.asarray(h) - scene.h_max
    else:
        h_viol = np.full_like(t, -1.0)
    cols = np.vstack([
        v_viol,
        np.abs(al) - limits.a_l_max,
        np.abs(ad) - limits.a_d_max,
        k_viol,
        h_viol,
    ])
    return t, cols


def check_feasibility(
    c: CandidateTrajectory,
    limits: FeasibilityLimits,
    scene: Optional[HazardScene] = None,
    path: Optional[ReferencePath] = None,
    dt: float = DEFAULT_DT,
) -> Feasibility:
    """Earliest violated constraint (family order breaks same-sample ties)."""
    t, cols = violation_profile(c, limits, scene, path, dt)
    bad = cols > 1e-12
    if not bad.any():
        return Feasibility(True)
    k = int(np.argmax(bad.any(axis=0)))
    fam = int(np.argmax(bad[:, k]))
    return Feasibility(False, FAMILIES[fam], float(t[k]), float(np.max(np.clip(cols, 0, None))))


def select_best(
    candidates: Sequence[CandidateTrajectory],
    weights: CostWeights,
    limits: FeasibilityLimits,
    scene: HazardScene,
    ref: Optional[RefTrajectory] = None,
    dt: float = DEFAULT_DT,
    path: Optional[ReferencePath] = None,
) -> CandidateTrajectory:
    """Minimum-cost feasible candidate; ties go to the lowest grid index.

    Candidates already flagged infeasible (e.g. by the ST corridor) stay
    infeasible.
    """
    if not candidates:
        raise AllInfeasible("no candidates")
    best = None
    for c in candidates:
        if c.feasible:
            f = check_feasibility(c, limits, scene, path, dt)
            if not f.feasible:
                c.feasible, c.violation = False, f.violation
        evaluate(c, weights, scene, ref, dt)
        if c.feasible and (best is None or (c.cost.total, c.index) < (best.cost.total, best.index)):
            best = c
    if best is None:
        raise AllInfeasible(f"all {len(candidates)} candidates infeasible")
    return best
