from dataclasses import replace

import numpy as np
import pytest

from riskplan.errors import NoFeasiblePlan
from riskplan.planner import (
    PlannerConfig, Road, TrackedObstacle, corridor_violation, fallback_candidate, plan, plan_or_fallback,
)
from riskplan.prediction import ObstacleState
from riskplan.sampler import FrenetState, SamplingDomain
from riskplan.scenario import load_scenario
from riskplan.sim import plan_once, run

ROAD1 = Road(lane_centers=(2.0,), lane_width=4.0, boundaries=(0.0, 4.0))


@pytest.fixture(scope="module")
def lane_change():
    return load_scenario("lane_change")


def cruise_cfg(**kw):
    # grid contains exact 25 m/s cruising end states for every tau
    base = PlannerConfig(sampler=SamplingDomain((50.0, 150.0), (2.0, 6.0), (3.0, 6.0), (5, 3, 4)))
    return replace(base, weights=replace(base.weights, v_target=25.0), **kw)


def test_empty_road_lane_keep(long_straight):
    cfg = cruise_cfg()
    res = plan(FrenetState(100.0, 25.0, 0.0, 2.0, 0.0, 0.0), [], long_straight, cfg)
    l_e, d_e, tau = res.selected.end_state
    assert d_e == 2.0
    assert res.selected.lon(tau, 1) == pytest.approx(25.0, abs=1e-9)
    assert res.hazard_stats["integral"] < 1e-6
    assert res.selected.feasible and res.dropped["feasible"] > 0


def test_lane_change_scene(lane_change):
    res, _, _ = plan_once(lane_change)
    sel = res.selected
    assert sel.end_state[1] == pytest.approx(6.0)
    assert corridor_violation(sel, res.corridor, res.corridor.times) == 0.0
    assert res.hazard_stats["max"] <= lane_change.planner.limits.h_max
    assert sel.feasible


def test_plan_deterministic(lane_change):
    a, _, _ = plan_once(lane_change, seed=3)
    b, _, _ = plan_once(lane_change, seed=3)
    assert a.selected.lon == b.selected.lon and a.selected.lat == b.selected.lat
    assert np.array_equal(a.corridor.bounds, b.corridor.bounds)
    assert [c.cost.total for c in a.candidates] == [c.cost.total for c in b.candidates]


def test_selected_inside_corridor_and_caps(lane_change):
    cfg = lane_change.planner
    for seed in range(3):
        res, _, _ = plan_once(lane_change, seed=seed)
        lo, hi = res.corridor.bounds.T
        l = res.selected.lon.extended(res.corridor.times)
        assert np.all(l >= lo - 1e-9) and np.all(l <= hi + 1e-9)
        assert res.hazard_stats["max"] <= cfg.limits.h_max


def wall(l_ego):
    # stopped vehicles across both lanes just ahead
    return [TrackedObstacle(ObstacleState(l_ego + 12.0, 0.0, d0=d, name=f"wall{i}")) for i, d in enumerate((2.0, 6.0))]


def test_no_feasible_plan_has_diagnostics(long_straight):
    cfg = cruise_cfg()
    start = FrenetState(100.0, 25.0, 0.0, 2.0, 0.0, 0.0)
    with pytest.raises(NoFeasiblePlan) as info:
        plan(start, wall(100.0), long_straight, cfg)
    diag = info.value.diagnostics
    assert diag["feasible"] == 0
    assert sum(v for k, v in diag.items() if k not in ("feasible", "ill_conditioned")) == cfg.sampler.size


def test_fallback_profile(long_straight):
    cfg = cruise_cfg()
    start = FrenetState(100.0, 12.0, 0.0, 2.3, 0.0, 0.0)
    res = plan_or_fallback(start, wall(100.0), long_straight, cfg)
    assert res.fallback
    fb = res.selected
    t = np.linspace(0, fb.duration, 50)
    assert np.allclose(fb.lon(t, 2), -3.0)
    assert fb.lon(fb.duration, 1) == pytest.approx(0.0, abs=1e-9)
    assert fb.end_state[1] == 2.0  # settles onto the nearest lane centre
    assert res.corridor_ok == (corridor_violation(fb, res.corridor, res.corridor.times) <= 1e-9
                               if res.corridor is not None else False)


def test_fallback_at_rest():
    fb = fallback_candidate(FrenetState(5.0, 0.0, 0.0, 2.0, 0.0, 0.0), Road())
    assert fb.lon(fb.duration) == pytest.approx(5.0)


def test_fallback_window_capped_at_horizon():
    fb = fallback_candidate(FrenetState(0.0, 30.0, 0.0, 2.0, 0.0, 0.0), Road(), 3.0, horizon=8.0)
    assert fb.duration == pytest.approx(8.0)
    assert fb.lon(8.0, 1) == pytest.approx(6.0)
    assert fb.lon(8.0, 2) == pytest.approx(-3.0)


def follow(res, tau):
    l, ld, ldd, d, dd, ddd = (float(v[0]) for v in res.selected.frenet(np.array([tau]), extend=True))
    return FrenetState(l, ld, ldd, d, dd, ddd)


def test_static_world_replans_agree(long_straight):
    cfg = cruise_cfg()
    obst = [TrackedObstacle(ObstacleState(300.0, 25.0, d0=6.0, name="far"))]
    first = plan(FrenetState(100.0, 25.0, 0.0, 2.0, 0.0, 0.0), obst, long_straight, cfg)
    # the world keeps moving at constant speed; re-plan half a second later from the planned state
    moved = [TrackedObstacle(ObstacleState(312.5, 25.0, d0=6.0, name="far"))]
    second = plan(follow(first, 0.5), moved, long_straight, cfg, t_plan=0.5)
    tt = np.linspace(0.5, min(first.selected.duration, 0.5 + second.selected.duration), 40)
    a = first.selected.frenet(tt, extend=True)
    b = second.selected.frenet(tt - 0.5, extend=True)
    assert np.max(np.abs(a[0] - b[0])) < 0.1 and np.max(np.abs(a[3] - b[3])) < 0.1


def test_braking_lead_lowers_corridor_and_speed(long_straight):
    cfg = replace(cruise_cfg(), sampler=SamplingDomain((20.0, 150.0), (2.0, 2.0), (3.0, 6.0), (27, 1, 4)))
    start = FrenetState(100.0, 20.0, 0.0, 2.0, 0.0, 0.0)
    lead = lambda a: [TrackedObstacle(ObstacleState(160.0, 20.0, a0=a, d0=2.0, style="Aggressive", name="lead"))]  # noqa: E731
    calm = plan(start, lead(0.0), long_straight, cfg, road=ROAD1)
    brake = plan(start, lead(-3.0), long_straight, cfg, road=ROAD1)
    assert np.all(brake.corridor.bounds[:, 1] <= calm.corridor.bounds[:, 1] + 1e-9)
    assert brake.corridor.bounds[-1, 1] < calm.corridor.bounds[-1, 1] - 1.0
    v_end = lambda r: r.selected.lon(r.selected.duration, 1)  # noqa: E731
    assert v_end(brake) < v_end(calm)


def test_single_replan_when_period_spans_run(lane_change):
    scn = lane_change.with_obstacles([])
    scn.duration = 2.0
    cfg = replace(scn.planner, replan_period=2.0)
    log = run(scn, cfg)
    assert len(log.plans) == 1
