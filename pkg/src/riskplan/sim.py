"""Closed-loop simulation: planner + MPC ego among scripted surrounding vehicles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .collision import Footprint, detect_collision
from .errors import CorridorGap, QpInfeasible
from .frenet import cartesian_to_frenet, heading_at, state_to_frenet
from .hazard import DynamicHazardSource, HazardScene, boundary_sources, total_hazard
from .metrics import MetricReport, compute_metrics
from .mpc import MpcSolution, build_reference, control_step
from .planner import PlannerConfig, PlanResult, TrackedObstacle, plan, plan_or_fallback
from .prediction import ObstacleState, PredictedTrack, Style, predict_state
from .sampler import FrenetState
from .scenario import Scenario
from .vehicle import ControlInput, VehicleState, step


@dataclass
class StepRecord:
    t: float
    x: float
    y: float
    theta: float
    v: float
    a: float
    delta: float
    l: float
    d: float
    l_dot: float
    d_dot: float
    lane: float
    hazard: float
    plan_id: int
    corridor_lo: float
    corridor_hi: float
    st_clearance: float
    qp_status: str
    qp_iterations: int
    slack: float


@dataclass
class SimLog:
    scenario: str
    seed: int
    method: str
    dt: float
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    plans: list = field(default_factory=list)  # per-replan diagnostic dicts
    metrics: Optional[MetricReport] = None
    collided: bool = False
    collision_with: Optional[str] = None
    goal_reached: bool = False
    complete_index: Optional[int] = None
    obstacle_poses: list = field(default_factory=list)  # per step: [(name, x, y, heading)]
    obstacle_frames: list = field(default_factory=list)  # per step: [(name, l, d, v, length, width)] in the ego frame
    plan_results: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


@dataclass(frozen=True)
class ObstacleWorld:
    """Ground-truth obstacle motion: the style predictor from the initial state."""

    initial: ObstacleState
    path: Optional[object]  # ReferencePath or None (ego path)
    projection: Optional[object]

    def pose(self, t: float, ego_path):
        s, v = predict_state(self.initial, t)
        p = self.path or ego_path
        if not 0.0 <= s <= p.total_length:
            return None
        d = 0.0 if self.path is not None else self.initial.d0
        x, y = p.to_cartesian(s, d)
        return float(x), float(y), float(p.heading(s)), s, v

    def current_state(self, t: float, seed: int) -> ObstacleState:
        s, v = predict_state(self.initial, t)
        o = self.initial
        a = o.a0 if (o.style is Style.AGGRESSIVE and v > 0) else 0.0
        return replace(o, s0=s, v0=v, a0=a, seed=seed)


def _derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _world(scn: Scenario, seed: int) -> list[ObstacleWorld]:
    out = []
    for i, spec in enumerate(scn.obstacles):
        st = spec.state
        if st.style is Style.UNCERTAIN:
            st = replace(st, seed=_derived_seed(seed, 1000 + i, st.seed))
        out.append(ObstacleWorld(st, scn.obstacle_path(i), scn.projection(i)))
    return out


class GoalTracker:
    def __init__(self, scn: Scenario):
        self.goal = scn.goal
        self.stage = 0
        self.done = False

    @property
    def lane(self) -> float:
        return self.goal.stages[min(self.stage, len(self.goal.stages) - 1)].lane

    def update(self, l: float, d: float, obstacle_l: dict) -> bool:
        g = self.goal
        if self.done:
            return True
        while self.stage < len(g.stages):
            st = g.stages[self.stage]
            if abs(d - st.lane) >= g.tolerance:
                break
            if st.ahead_of and not l > obstacle_l.get(st.ahead_of, math.inf) + st.margin:
                break
            if self.stage == len(g.stages) - 1:
                break
            self.stage += 1
        last = self.stage == len(g.stages) - 1 and abs(d - g.stages[-1].lane) < g.tolerance
        if g.exit_l is not None:
            self.done = l >= g.exit_l
        else:
            self.done = last
        return self.done


def _hazard_now(scn: Scenario, cfg: PlannerConfig, l, d, v, obs_frames) -> float:
    hc = cfg.hazard
    lo, hi = max(l - 20.0, 0.0), min(l + 20.0, scn.path.total_length)
    statics = []
    for d_b in scn.road.boundaries:
        statics += boundary_sources(lo, hi, d_b, hc.boundary_peak, hc.boundary_spacing, hc.boundary_eta_l, hc.boundary_eta_d)
    dyn = []
    for (lo_, do_, vo_, length) in obs_frames:
        track = PredictedTrack(np.array([0.0]), np.array([lo_]), np.array([do_]), np.array([vo_]), cfg.st.dt)
        dyn.append(DynamicHazardSource(track, hc.peak, hc.zeta0, hc.k_zeta, hc.lambda0, hc.k_lambda, length, hc.beta))
    return float(total_hazard(HazardScene(tuple(statics), tuple(dyn), cfg.limits.h_max), v, l, d, 0.0))


def _st_clearance(cfg: PlannerConfig, l, d, obs_frames, widths) -> float:
    """Smallest longitudinal clearance to lane-conflicting obstacles, beyond the base buffer."""
    best = math.inf
    for (lo_, do_, _, length), w in zip(obs_frames, widths):
        gate = 0.5 * (cfg.ego_width + w) + cfg.st.lateral_margin
        if abs(d - do_) >= gate:
            continue
        need = 0.5 * (cfg.ego_length + length) + cfg.st.eps0
        best = min(best, abs(l - lo_) - need)
    return best


Selector = Optional[Callable]


def _tracked_at(world: Sequence[ObstacleWorld], path, t: float, seed: int, k: int):
    """Poses, ego-frame tuples, widths and planner inputs of the obstacles on the road at ``t``."""
    poses, frames, widths, tracked, names_l = [], [], [], [], {}
    for i, w in enumerate(world):
        pose = w.pose(t, path)
        if pose is None:
            continue
        x_o, y_o, h_o, s_o, v_o = pose
        poses.append((w.initial.name, x_o, y_o, h_o))
        tob = TrackedObstacle(w.current_state(t, _derived_seed(seed, k, i)), w.projection)
        lo_, do_, vo_ = (float(np.asarray(a).ravel()[0]) for a in tob.ego_frame(np.array([s_o]), np.array([v_o])))
        frames.append((lo_, do_, vo_, w.initial.length))
        widths.append(w.initial.width)
        tracked.append(tob)
        names_l[w.initial.name] = lo_
    return poses, frames, widths, tracked, names_l


def initial_state(scn: Scenario) -> VehicleState:
    x0, y0 = scn.path.to_cartesian(scn.ego_l, scn.ego_d)
    return VehicleState(float(x0), float(y0), float(heading_at(scn.path, scn.ego_l)), scn.ego_v)


def plan_once(scn: Scenario, cfg: Optional[PlannerConfig] = None, seed: int = 0, selector: Selector = None):
    """The first planning cycle of ``run`` (t = 0), without the fallback.

    Returns ``(PlanResult, tracked obstacles, obstacle poses)``; raises
    NoFeasiblePlan like ``plan``.
    """
    cfg = cfg or scn.planner
    ego = initial_state(scn)
    fr = state_to_frenet(scn.path, ego.x, ego.y, ego.theta, ego.v, 0.0)
    poses, _, _, tracked, _ = _tracked_at(_world(scn, seed), scn.path, 0.0, seed, 0)
    l, d, l_dot, d_dot, l_dd, d_dd = (float(v) for v in fr[:6])
    start = FrenetState(l, l_dot, l_dd, d, d_dot, d_dd)
    goal = GoalTracker(scn)
    result = plan(start, tracked, scn.path, cfg, scn.road, goal.lane, seed=_derived_seed(seed, 0), selector=selector)
    return result, tracked, poses


def run(
    scn: Scenario,
    cfg: Optional[PlannerConfig] = None,
    seed: int = 0,
    selector: Selector = None,
    method: str = "SQP",
    dt: Optional[float] = None,
    keep_plans: bool = False,
) -> SimLog:
    """Fixed-step closed loop at the MPC step; stops at duration, goal (+settle) or collision."""
    cfg = cfg or scn.planner
    mpc_cfg = cfg.mpc
    if dt is not None and abs(dt - mpc_cfg.dt) > 1e-12:
        mpc_cfg = replace(mpc_cfg, vehicle=replace(mpc_cfg.vehicle, dt=dt))
        cfg = replace(cfg, mpc=mpc_cfg)
    vp = mpc_cfg.vehicle
    dt = vp.dt
    path = scn.path
    world = _world(scn, seed)
    log = SimLog(scn.name, seed, method, dt)

    ego = initial_state(scn)
    a_prev, delta_prev = 0.0, 0.0
    result: Optional[PlanResult] = None
    mpc_prev: Optional[MpcSolution] = None
    goal = GoalTracker(scn)
    replan_every = max(int(round(cfg.replan_period / dt)), 1)
    n_steps = int(round(scn.duration / dt))
    settle_left: Optional[int] = None
    plan_id = -1
    l_hint = scn.ego_l

    for k in range(n_steps + 1):
        t = k * dt
        try:
            fr = state_to_frenet(path, ego.x, ego.y, ego.theta, ego.v, a_prev)
        except Exception as exc:  # ego left the reference corridor
            log.events.append({"t": t, "event": "lost_reference", "detail": str(exc)})
            break
        l, d, l_dot, d_dot = fr[0], fr[1], fr[2], fr[3]
        l_hint = l

        poses, frames, widths, tracked, names_l = _tracked_at(world, path, t, seed, k)
        log.obstacle_poses.append(poses)
        log.obstacle_frames.append([(p[0], *f, w) for p, f, w in zip(poses, frames, widths)])

        ego_fp = Footprint(ego.x, ego.y, ego.theta, cfg.ego_length, cfg.ego_width)
        others = [Footprint(x_o, y_o, h_o, world_len, world_w) for (_, x_o, y_o, h_o), (_, _, _, world_len), world_w in zip(poses, frames, widths)]
        hit, idx = detect_collision(ego_fp, others)

        reached = goal.update(l, d, names_l)
        if reached and log.complete_index is None:
            log.complete_index = k
            log.goal_reached = True
            settle_left = int(round(scn.goal.settle / dt))

        # replan on the fixed cadence; the terminal step executes nothing, so it never replans
        if k % replan_every == 0 and not hit and (result is None or k < n_steps):
            if result is not None:
                tau = t - result.t_plan
                _, _, l_dd, _, _, d_dd = result.selected.frenet(np.array([tau]), extend=True)
                l_dd, d_dd = float(l_dd[0]), float(d_dd[0])
            else:
                l_dd, d_dd = fr[4], fr[5]
            start = FrenetState(l, l_dot, l_dd, d, d_dot, d_dd)
            result = plan_or_fallback(
                start, tracked, path, cfg, scn.road, goal.lane, seed=_derived_seed(seed, k),
                selector=selector, t_plan=t,
            )
            plan_id += 1
            entry = {
                "t": t, "plan_id": plan_id, "fallback": result.fallback, "corridor_ok": result.corridor_ok,
                "end_state": list(result.selected.end_state), "cost": None if result.selected.cost is None else result.selected.cost.total,
                "hazard_max": result.hazard_stats["max"], "hazard_integral": result.hazard_stats["integral"],
                "dropped": result.dropped,
            }
            log.plans.append(entry)
            if result.fallback:
                log.events.append({"t": t, "event": "fallback", "detail": result.diagnostics.get("reason", "")})
            if keep_plans:
                log.plan_results.append(result)

        # track with MPC
        qp_status, qp_iter, slack = "none", 0, 0.0
        if not hit:
            sel, t_plan = result.selected, result.t_plan
            ref = build_reference(
                path, lambda tt: sel.frenet(np.maximum(tt - t_plan, 0.0), extend=True), t, mpc_cfg.N, dt, vp.wheelbase
            )
            try:
                sol = control_step(ego, ref, mpc_cfg, result.corridor, mpc_prev, a_prev, corridor_t0=t_plan)
                u = sol.first_input
                mpc_prev = sol
                qp_status, qp_iter, slack = sol.qp.status.value, sol.qp.iterations, sol.max_slack
            except (QpInfeasible, CorridorGap) as exc:
                a_brake = max(-cfg.fallback_decel, a_prev - vp.j_max * dt)
                u = ControlInput(a_brake if ego.v > 0 else 0.0, float(np.clip(delta_prev, -vp.delta_max, vp.delta_max)))
                mpc_prev = None
                qp_status = "failed"
                log.events.append({"t": t, "event": "mpc_failure", "detail": str(exc)})
        else:
            u = ControlInput(0.0, 0.0)

        if result is not None and result.corridor is not None:
            lo_c, hi_c = result.corridor.bounds_at(t - result.t_plan)
        else:
            lo_c, hi_c = math.nan, math.nan
        log.records.append(
            StepRecord(
                t, ego.x, ego.y, ego.theta, ego.v, u.a, u.delta, l, d, l_dot, d_dot, scn.road.nearest_lane(d),
                _hazard_now(scn, cfg, l, d, l_dot, frames), plan_id, float(lo_c), float(hi_c),
                _st_clearance(cfg, l, d, frames, widths), qp_status, qp_iter, slack,
            )
        )
        if hit:
            log.collided = True
            log.collision_with = poses[idx][0]
            log.events.append({"t": t, "event": "collision", "detail": poses[idx][0]})
            break
        if settle_left is not None:
            if settle_left <= 0:
                break
            settle_left -= 1
        ego = step(ego, u, vp)
        a_prev, delta_prev = u.a, u.delta

    log.metrics = metrics_of(log, scn, vp.wheelbase)
    return log


def metrics_of(log: SimLog, scn: Scenario, wheelbase: float) -> MetricReport:
    curv = np.tan(log.column("delta")) / wheelbase
    return compute_metrics(
        log.column("t"), log.column("l_dot"), log.column("d_dot"), log.column("d"), curv,
        log.collided, log.complete_index, lateral_maneuver=scn.goal.lateral,
    )
