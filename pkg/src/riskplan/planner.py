"""Planning pipeline: hazard field -> ST corridor -> quintic candidates -> selection.

One call to :func:`plan` runs the spatial-temporal stage from the current
world state.  Obstacles arrive as :class:`TrackedObstacle` records whose
``state`` refers to plan time; ego-frame geometry for obstacles driving their
own paths is tabulated once in a :class:`PathProjection`.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cost import (
    DEFAULT_DT,
    CostWeights,
    FeasibilityLimits,
    check_feasibility,
    evaluate,
)
from .errors import AllInfeasible, NoFeasibleCorridor, NoFeasiblePlan, PointTooFar, ProjectionDiverged
from .frenet import ReferencePath, cartesian_to_frenet
from .hazard import DynamicHazardSource, HazardScene, boundary_sources, total_hazard
from .mpc import MpcConfig
from .prediction import ObstacleState, PredictedTrack, predict_state
from .sampler import (
    BoundaryCondition,
    CandidateSet,
    CandidateTrajectory,
    FrenetState,
    Quintic,
    SamplingDomain,
    sample_end_states,
    solve_quintic,
    terminal_speed,
)
from .st_graph import (
    PathConflict,
    SafeCorridor,
    SameLane,
    aggregate,
    build_region,
    safe_corridor,
    st_times,
)

FAR = 1e6  # ego-frame position used for obstacle samples that do not map onto the ego path


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StConfig:
    T_max: float = 8.0
    dt: float = 0.1
    eps0: float = 2.0
    eps_rate: float = 0.25
    lateral_margin: float = 0.5  # added to the half-width sum when gating lane conflicts
    s_behind: float = 100.0
    s_ahead: float = 400.0


@dataclass(frozen=True)
class HazardConfig:
    peak: float = 5.0
    zeta0: float = 3.0
    k_zeta: float = 0.2
    lambda0: float = 1.0
    k_lambda: float = 0.1
    beta: float = 1.5
    boundary_peak: float = 4.0
    boundary_spacing: float = 2.0
    boundary_eta_l: float = 2.0
    boundary_eta_d: float = 0.3
    window_behind: float = 30.0
    window_ahead: float = 300.0


@dataclass(frozen=True)
class PlannerConfig:
    """``sampler.l_range`` is relative to the ego arc length at plan time."""

    replan_period: float = 0.5
    sampler: SamplingDomain = field(default_factory=lambda: SamplingDomain((20.0, 120.0), (2.0, 6.0), (3.0, 6.0), (9, 3, 4)))
    weights: CostWeights = field(default_factory=CostWeights)
    limits: FeasibilityLimits = field(default_factory=FeasibilityLimits)
    st: StConfig = field(default_factory=StConfig)
    hazard: HazardConfig = field(default_factory=HazardConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    terminal_policy: str = "kinematic"
    cost_dt: float = DEFAULT_DT
    ego_length: float = 4.5
    ego_width: float = 1.8
    fallback_decel: float = 3.0

    def __post_init__(self):
        if self.replan_period < self.mpc.dt - 1e-12:
            raise ValueError("replan_period must be at least the MPC step")
        if self.st.T_max < self.sampler.tau_range[1]:
            raise ValueError("ST horizon must cover the longest candidate")


@dataclass(frozen=True)
class Road:
    """Lateral layout in ego-path coordinates."""

    lane_centers: tuple[float, ...] = (2.0, 6.0)
    lane_width: float = 4.0
    boundaries: tuple[float, ...] = (0.0, 8.0)

    def nearest_lane(self, d: float) -> float:
        return min(self.lane_centers, key=lambda c: (abs(c - d), c))


# ---------------------------------------------------------------------------
# obstacle geometry in the ego frame


@dataclass(frozen=True)
class PathProjection:
    """Obstacle-path samples expressed in ego-path coordinates.

    ``valid`` marks samples within ``max_offset`` of the ego path; ``cos_rel``
    is the cosine between the two path headings at each sample.
    """

    s: np.ndarray
    l: np.ndarray
    d: np.ndarray
    cos_rel: np.ndarray
    valid: np.ndarray
    step: float

    def lookup(self, s):
        """Nearest-sample (l, d, cos_rel); samples off the table map far away."""
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.rint((s - self.s[0]) / self.step).astype(int), 0, len(self.s) - 1)
        inside = (s >= self.s[0] - self.step) & (s <= self.s[-1] + self.step)
        ok = self.valid[idx] & inside
        return (
            np.where(ok, self.l[idx], FAR),
            np.where(ok, self.d[idx], FAR),
            np.where(ok, self.cos_rel[idx], 0.0),
        )


def project_path(own: ReferencePath, ego: ReferencePath, step: float = 0.5, max_offset: float = 15.0) -> PathProjection:
    s = np.arange(0.0, own.total_length + 1e-9, step)
    xy = np.column_stack(own.position(s))
    phi_own = np.asarray(own.heading(s))
    l = np.zeros_like(s)
    d = np.full_like(s, FAR)
    for i, (x, y) in enumerate(xy):
        try:
            l[i], d[i] = cartesian_to_frenet(ego, float(x), float(y), corridor=max_offset + 5.0)
        except (PointTooFar, ProjectionDiverged):
            continue
    valid = np.abs(d) <= max_offset
    # samples projecting onto the ego path's end caps are outside its extent
    valid &= (l > 1e-6) & (l < ego.total_length - 1e-6)
    lc = np.clip(l, 0.0, ego.total_length)
    cos_rel = np.cos(phi_own - np.asarray(ego.heading(lc)))
    return PathProjection(s, l, d, cos_rel, valid, step)


@dataclass(frozen=True)
class TrackedObstacle:
    """Obstacle with its state at plan time.

    ``projection`` is None when the obstacle drives along the ego path at
    lateral offset ``state.d0``.
    """

    state: ObstacleState
    projection: Optional[PathProjection] = None

    @property
    def name(self) -> str:
        return self.state.name

    def ego_frame(self, s, v):
        """Ego-frame (l, d, v_l) for obstacle path positions ``s`` and speeds ``v``."""
        s = np.asarray(s, dtype=float)
        if self.projection is None:
            return s, np.full_like(s, self.state.d0), np.asarray(v, dtype=float)
        l, d, c = self.projection.lookup(s)
        return l, d, np.asarray(v, dtype=float) * c


def predicted_samples(o: ObstacleState, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    states = [predict_state(o, float(t)) for t in times]
    return np.array([s for s, _ in states]), np.array([v for _, v in states])


# ---------------------------------------------------------------------------
# results


@dataclass
class PlanResult:
    selected: CandidateTrajectory
    corridor: Optional[SafeCorridor]
    dropped: dict
    hazard_stats: dict
    candidates: CandidateSet
    blocked: list
    t_plan: float = 0.0
    fallback: bool = False
    corridor_ok: bool = True
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# stages


@dataclass
class PlanningScene:
    """Everything derived from the world state at plan time."""

    hazard: HazardScene
    st_times: np.ndarray
    obstacles: list
    positions: list  # per obstacle: predicted path positions at st_times
    projections: list  # per obstacle: ST projection object
    s_domain: tuple[float, float]
    cfg: PlannerConfig
    _corridor_cache: dict = field(default_factory=dict)


def build_hazard_scene(
    l_now: float, obstacles: Sequence[TrackedObstacle], road: Road, cfg: PlannerConfig, path_length: float
) -> HazardScene:
    hc, st = cfg.hazard, cfg.st
    lo = max(l_now - hc.window_behind, 0.0)
    hi = min(l_now + hc.window_ahead, path_length)
    statics = []
    for d_b in road.boundaries:
        statics += boundary_sources(
            lo, hi, d_b, hc.boundary_peak, hc.boundary_spacing, hc.boundary_eta_l, hc.boundary_eta_d
        )
    tau = st_times(st.T_max, st.dt)
    dyn = []
    for ob in obstacles:
        s, v = predicted_samples(ob.state, tau)
        l, d, vl = ob.ego_frame(s, v)
        track = PredictedTrack(tau=tau, l=l, d=d, v=vl, dt=st.dt)
        dyn.append(
            DynamicHazardSource(
                track, hc.peak, hc.zeta0, hc.k_zeta, hc.lambda0, hc.k_lambda, ob.state.length, hc.beta
            )
        )
    return HazardScene(tuple(statics), tuple(dyn), cfg.limits.h_max)


def build_scene(
    l_now: float, obstacles: Sequence[TrackedObstacle], road: Road, cfg: PlannerConfig, path_length: float
) -> PlanningScene:
    st = cfg.st
    times = st_times(st.T_max, st.dt)
    positions, projections = [], []
    for ob in obstacles:
        s, _ = predicted_samples(ob.state, times)
        positions.append(s)
        gate = 0.5 * (cfg.ego_width + ob.state.width) + st.lateral_margin
        if ob.projection is None:
            projections.append(SameLane(0.0, ob.state.d0, gate))
        else:
            pj = ob.projection
            m = pj.valid
            projections.append(PathConflict(pj.s[m], pj.l[m], pj.d[m], 0.5 * ob.state.width, gate))
    hazard = build_hazard_scene(l_now, obstacles, road, cfg, path_length)
    s_domain = (l_now - st.s_behind, l_now + st.s_ahead)
    return PlanningScene(hazard, times, list(obstacles), positions, projections, s_domain, cfg)


def lateral_profile(start: FrenetState, d_e: float, tau: float) -> Quintic:
    return solve_quintic(BoundaryCondition(start.d, start.d_dot, start.d_ddot, d_e, 0.0, 0.0), 0.0, tau)


def corridor_for(scene: PlanningScene, start: FrenetState, lat: Quintic, key=None):
    """(corridor or None, blocked intervals) for one ego lateral profile."""
    if key is not None and key in scene._corridor_cache:
        return scene._corridor_cache[key]
    st = scene.cfg.st
    ego_d = np.asarray(lat.extended(scene.st_times))
    lookup = {round(float(t) / st.dt): float(dv) for t, dv in zip(scene.st_times, ego_d)}
    regions = [
        build_region(
            ob.state, pj, st.T_max, st.dt, st.eps0, st.eps_rate, 0.5 * scene.cfg.ego_length,
            ego_lateral=lambda t: lookup[round(t / st.dt)], obstacle_id=ob.name, positions=pos,
        )
        for ob, pj, pos in zip(scene.obstacles, scene.projections, scene.positions)
    ]
    blocked = aggregate(regions, st.T_max, st.dt)
    lim = scene.cfg.limits
    try:
        corr = safe_corridor(
            blocked, start.l, scene.s_domain, st.T_max, st.dt, 0.0, lim.v_max, scene.cfg.weights.v_target
        )
    except NoFeasibleCorridor:
        corr = None
    out = (corr, blocked)
    if key is not None:
        scene._corridor_cache[key] = out
    return out


def corridor_violation(c: CandidateTrajectory, corridor: Optional[SafeCorridor], times: np.ndarray) -> float:
    """Largest distance of the (extended) longitudinal profile outside the corridor."""
    if corridor is None:
        return math.inf
    l = np.asarray(c.lon.extended(times))
    over = np.maximum(corridor.bounds[:, 0] - l, l - corridor.bounds[:, 1])
    return float(max(over.max(), 0.0))


def goal_reference(l_now: float, goal_d: float, v_target: float):
    def ref(t):
        t = np.asarray(t, dtype=float)
        return l_now + v_target * t, np.full_like(t, goal_d)

    return ref


def make_candidate(start: FrenetState, l_e: float, d_e: float, tau: float, cfg: PlannerConfig, index: int):
    v_e = terminal_speed(cfg.terminal_policy, start, l_e, tau, cfg.weights.v_target)
    lon = solve_quintic(BoundaryCondition(start.l, start.l_dot, start.l_ddot, l_e, v_e, 0.0), 0.0, tau)
    lat = lateral_profile(start, d_e, tau)
    return CandidateTrajectory(lon=lon, lat=lat, end_state=(l_e, d_e, tau), index=index)


def assess(c: CandidateTrajectory, scene: PlanningScene, start: FrenetState, path: ReferencePath, ref, key=None):
    """Mark feasibility (corridor first, then the hard limits) and evaluate cost.

    Returns the violation magnitude (0 when feasible).
    """
    cfg = scene.cfg
    corr, _ = corridor_for(scene, start, c.lat, key)
    gap = corridor_violation(c, corr, scene.st_times)
    magnitude = 0.0
    if gap > 1e-9:
        c.feasible, c.violation = False, "corridor"
        magnitude = gap if math.isfinite(gap) else 1e3
    else:
        f = check_feasibility(c, cfg.limits, scene.hazard, path, cfg.cost_dt)
        if not f.feasible:
            c.feasible, c.violation = False, f.violation
            magnitude = f.magnitude
    evaluate(c, cfg.weights, scene.hazard, ref, cfg.cost_dt)
    return magnitude


Selector = Callable[..., CandidateTrajectory]


def grid_select(start, scene, path, ref, cfg, seed) -> tuple[CandidateTrajectory, CandidateSet]:
    """Exhaustive evaluation of the sampling grid (the default pipeline)."""
    dom = SamplingDomain(
        (start.l + cfg.sampler.l_range[0], start.l + cfg.sampler.l_range[1]),
        cfg.sampler.d_range, cfg.sampler.tau_range, cfg.sampler.counts,
    )
    out = CandidateSet()
    for idx, (l_e, d_e, tau) in enumerate(sample_end_states(dom)):
        try:
            c = make_candidate(start, l_e, d_e, tau, cfg, idx)
        except Exception as exc:  # IllConditioned
            out.dropped.append((idx, (l_e, d_e, tau), str(exc)))
            continue
        assess(c, scene, start, path, ref, key=(d_e, tau))
        out.candidates.append(c)
    feas = [c for c in out if c.feasible]
    if not feas:
        err = AllInfeasible(f"all {len(out)} candidates infeasible")
        err.candidates = out
        raise err
    best = min(feas, key=lambda c: (c.cost.total, c.index))
    return best, out


def fallback_candidate(
    start: FrenetState, road: Road, decel: float = 3.0, horizon: float = math.inf
) -> CandidateTrajectory:
    """Constant ``decel`` braking to rest while settling onto the nearest lane center.

    The window is cut at ``horizon`` (the prediction horizon) when stopping
    takes longer; the next replan continues the braking.
    """
    v0 = max(start.l_dot, 0.0)
    T = min(max(v0 / decel, 0.1), horizon)
    a = -decel if v0 > 0 else 0.0
    if v0 / decel < 0.1:
        a = -v0 / T
    lon = Quintic((start.l, v0, 0.5 * a, 0.0, 0.0, 0.0), 0.0, T)
    d_e = road.nearest_lane(start.d) if T >= 2.0 else start.d
    lat = solve_quintic(BoundaryCondition(start.d, start.d_dot, start.d_ddot, d_e, 0.0, 0.0), 0.0, T)
    return CandidateTrajectory(lon=lon, lat=lat, end_state=(lon(T), d_e, T), index=-1)


def plan(
    ego: FrenetState,
    obstacles: Sequence[TrackedObstacle],
    path: ReferencePath,
    cfg: PlannerConfig,
    road: Road = Road(),
    goal_d: Optional[float] = None,
    seed: int = 0,
    selector: Optional[Selector] = None,
    t_plan: float = 0.0,
) -> PlanResult:
    """Run one spatial-temporal planning cycle.

    Raises NoFeasiblePlan (with per-family counts in ``diagnostics``) when no
    candidate survives the corridor and hard-limit checks.
    """
    start = FrenetState(*(float(v) for v in ego))
    scene = build_scene(start.l, obstacles, road, cfg, path.total_length)
    gd = road.nearest_lane(start.d) if goal_d is None else goal_d
    ref = goal_reference(start.l, gd, cfg.weights.v_target)
    select = selector or grid_select
    try:
        best, cands = select(start, scene, path, ref, cfg, seed)
    except AllInfeasible as exc:
        cands = getattr(exc, "candidates", None)
        err = NoFeasiblePlan(str(exc), diagnostics=_diagnostics(cands))
        err.candidates = cands
        raise err from exc
    corr, blocked = corridor_for(scene, start, best.lat, key=None)
    return PlanResult(
        selected=best,
        corridor=corr,
        dropped=_diagnostics(cands),
        hazard_stats=hazard_stats(best, scene.hazard, cfg.cost_dt),
        candidates=cands,
        blocked=blocked,
        t_plan=t_plan,
    )


def plan_or_fallback(ego, obstacles, path, cfg, road=Road(), goal_d=None, seed=0, selector=None, t_plan=0.0):
    """``plan`` with the braking fallback substituted on NoFeasiblePlan."""
    try:
        return plan(ego, obstacles, path, cfg, road, goal_d, seed, selector, t_plan)
    except NoFeasiblePlan as exc:
        start = FrenetState(*(float(v) for v in ego))
        scene = build_scene(start.l, obstacles, road, cfg, path.total_length)
        fb = fallback_candidate(start, road, cfg.fallback_decel, cfg.st.T_max)
        corr, blocked = corridor_for(scene, start, fb.lat)
        ok = corridor_violation(fb, corr, scene.st_times) <= 1e-9
        evaluate(fb, cfg.weights, scene.hazard, None, cfg.cost_dt)
        return PlanResult(
            selected=fb, corridor=corr, dropped=exc.diagnostics or {},
            hazard_stats=hazard_stats(fb, scene.hazard, cfg.cost_dt), candidates=CandidateSet(),
            blocked=blocked, t_plan=t_plan, fallback=True, corridor_ok=ok,
            diagnostics={"reason": str(exc)},
        )


def _diagnostics(cands: Optional[CandidateSet]) -> dict:
    if cands is None:
        return {}
    counts = Counter(c.violation for c in cands if not c.feasible)
    out = {k: int(v) for k, v in sorted(counts.items())}
    out["ill_conditioned"] = len(cands.dropped)
    out["feasible"] = sum(1 for c in cands if c.feasible)
    return out


def hazard_stats(c: CandidateTrajectory, scene: HazardScene, dt: float = DEFAULT_DT) -> dict:
    from .cost import sample_times, _trapz

    t = sample_times(c, dt)
    h = np.asarray(total_hazard(scene, c.lon(t, 1), c.lon(t), c.lat(t), t))
    return {"max": float(h.max()), "integral": float(_trapz(h, t))}
