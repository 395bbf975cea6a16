"""Acceptance criteria 1-10.

Each test prints a single ``criterion N: PASS|FAIL`` line with its runtime and
the measured quantities; the lines are repeated in the pytest terminal
summary.  A criterion fails when either its property or its time budget fails.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from riskplan.baselines import run_comparison
from riskplan.cli import blocked_trace, main
from riskplan.frenet import FrenetPoint, build_reference, cartesian_to_frenet, curvature_at, frenet_to_cartesian
from riskplan.hazard import DynamicHazardSource, HazardScene, StaticHazardSource, dynamic_hazard, static_hazard, total_hazard
from riskplan.mpc import MpcConfig, build_reference as mpc_reference, control_step
from riskplan.prediction import ObstacleState, PredictedTrack, predict_track
from riskplan.qp import QpStatus, solve
from riskplan.sampler import (
    BoundaryCondition, FrenetState, SamplingDomain, boundary_residuals, generate_candidates, solve_quintic,
    terminal_speed,
)
from riskplan.scenario import STOCK, load_scenario
from riskplan.sim import run
from riskplan.st_graph import gaps_connected, safe_corridor
from riskplan.errors import NoFeasibleCorridor
from riskplan.vehicle import VehicleParams, VehicleState, linearize, step

from conftest import ACCEPTANCE_LINES, circle_points, s_curve_points
from oracles import corridor_oracle, qp_projected_gradient
from test_qp import random_problem
from test_st_graph import random_blocked
from test_vehicle import fd_jacobians


@contextmanager
def criterion(n, budget_s):
    """Time the body; it fills ``info`` with a verdict and a detail string."""
    info = {"ok": False, "detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
    except Exception as exc:
        info["ok"] = False
        info["detail"] = f"raised {type(exc).__name__}: {exc}"
        raise
    finally:
        dt = time.perf_counter() - t0
        in_time = dt < budget_s
        ok = info["ok"] and in_time
        line = (f"criterion {n}: {'PASS' if ok else 'FAIL'} ({dt:.1f} s, budget {budget_s:g} s"
                f"{'' if in_time else ', OVER BUDGET'}) {info['detail']}")
        print(line)
        ACCEPTANCE_LINES.append(line)
    assert info["ok"], info["detail"]
    assert in_time, f"took {dt:.1f} s, budget {budget_s} s"


def test_criterion_1_geometry():
    with criterion(1, 10) as info:
        paths = {
            "straight": build_reference([(10.0 * i, 0.0) for i in range(12)]),
            "circle": build_reference(circle_points()),
            "s_curve": build_reference(s_curve_points()),
        }
        rng = np.random.default_rng(1)
        worst_rt, worst_k, n_pts = 0.0, 0.0, 0
        for name, p in paths.items():
            for _ in range(334 if name != "s_curve" else 332):
                l = rng.uniform(0.02, 0.98) * p.total_length
                k = abs(curvature_at(p, l))
                d = rng.uniform(-0.8, 0.8) * min(8.0, 0.8 / k if k > 1e-9 else 8.0)
                x, y = frenet_to_cartesian(p, FrenetPoint(l, d))
                back = cartesian_to_frenet(p, x, y)
                x2, y2 = frenet_to_cartesian(p, back)
                worst_rt = max(worst_rt, abs(back.l - l), abs(back.d - d), math.hypot(x2 - x, y2 - y))
                n_pts += 1
            h = 1e-4
            for l in np.linspace(0.01, p.total_length - 0.01, 300):
                k = curvature_at(p, l)
                a, b = p.heading(l - h), p.heading(l + h)
                fd = ((b - a + math.pi) % (2 * math.pi) - math.pi) / (2 * h)
                worst_k = max(worst_k, abs(k - fd) / max(1e-4, 1e-2 * abs(k)))
        info["ok"] = n_pts == 1000 and worst_rt < 1e-6 and worst_k <= 1.0
        info["detail"] = f"round-trip max err {worst_rt:.2e} m over {n_pts} points; curvature err/tol {worst_k:.3f}"


def test_criterion_2_quintic():
    with criterion(2, 1) as info:
        rng = np.random.default_rng(2)
        worst, n = 0.0, 0
        for trial in range(20):
            start = FrenetState(*rng.uniform(-5, 5, 6) * [10, 3, 1, 1, 1, 0.5])
            dom = SamplingDomain((start.l + 10, start.l + 80), (-4.0, 4.0), (1.0, 6.0), (4, 3, 4))
            policy = "kinematic" if trial % 2 else "target"
            for c in generate_candidates(start, dom, policy, v_target=12.0, t_i=float(trial)):
                l_e, d_e, tau = c.end_state
                v_e = terminal_speed(policy, start, l_e, tau, 12.0)
                r1 = boundary_residuals(c.lon, BoundaryCondition(start.l, start.l_dot, start.l_ddot, l_e, v_e, 0.0))
                r2 = boundary_residuals(c.lat, BoundaryCondition(start.d, start.d_dot, start.d_ddot, d_e, 0.0, 0.0))
                worst = max(worst, r1.max(), r2.max())
                n += 1
        M = np.array([[1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 2, 0, 0, 0],
                      [1, 1, 1, 1, 1, 1], [0, 1, 2, 3, 4, 5], [0, 0, 2, 6, 12, 20]], dtype=float)
        oracle = np.linalg.solve(M, [0, 0, 0, 1, 0, 0])
        unit = np.asarray(solve_quintic(BoundaryCondition(0, 0, 0, 1, 0, 0), 0.0, 1.0).b)
        err = max(np.max(np.abs(unit - oracle)), np.max(np.abs(unit - [0, 0, 0, 10, -15, 6])))
        info["ok"] = worst <= 1e-9 and err <= 1e-9
        info["detail"] = f"{n} candidates, max boundary residual {worst:.2e}; unit problem coefficient err {err:.2e}"


def test_criterion_3_qp():
    with criterion(3, 30) as info:
        d_obj, kkt, bad = 0.0, 0.0, 0
        for seed in range(50):
            prob = random_problem(seed)
            sol = solve(prob)
            if sol.status is not QpStatus.OPTIMAL:
                bad += 1
                continue
            _, obj = qp_projected_gradient(prob.Q, prob.c, prob.A_ineq, prob.b_ineq, prob.A_eq, prob.b_eq)
            d_obj = max(d_obj, abs(sol.objective - obj))
            kkt = max(kkt, sol.kkt_residual)
        info["ok"] = bad == 0 and d_obj <= 1e-6 and kkt <= 1e-8
        info["detail"] = f"50 QPs, non-optimal {bad}, max |obj - oracle| {d_obj:.2e}, max KKT residual {kkt:.2e}"


def test_criterion_4_linearization():
    with criterion(4, 5) as info:
        rng = np.random.default_rng(4)
        p = VehicleParams(wheelbase=2.7, dt=0.1)
        worst = 0.0
        for _ in range(100):
            s = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-math.pi, math.pi), rng.uniform(0, 30)])
            u = np.array([rng.uniform(-4, 4), rng.uniform(-0.4, 0.4)])
            A, B, _ = linearize(s, u, p)
            Af, Bf = fd_jacobians(s, u, p)
            worst = max(worst, np.max(np.abs(A - Af)), np.max(np.abs(B - Bf)))
        info["ok"] = worst < 1e-5
        info["detail"] = f"100 nominal points, max |J - J_fd| {worst:.2e}"


def _still(l, d, horizon=3.0, dt=0.1):
    n = int(round(horizon / dt)) + 1
    return PredictedTrack(np.arange(n) * dt, np.full(n, l), np.full(n, d), np.zeros(n), dt)


def test_criterion_5_hazard():
    with criterion(5, 5) as info:
        rng = np.random.default_rng(5)
        statics = [StaticHazardSource(30.0, 0.0, 4.0, 3.0, 1.0), StaticHazardSource(60.0, 2.0, 2.0, 5.0, 0.5)]
        dyn = [DynamicHazardSource(predict_track(ObstacleState(40.0, 8.0, d0=-1.0), 3.0, 0.1), peak=6.0),
               DynamicHazardSource(predict_track(ObstacleState(10.0, 15.0, d0=3.0), 3.0, 0.1), peak=4.0)]
        full = HazardScene(statics, dyn)
        sup = 0.0
        for _ in range(500):
            l, d, tau, v = rng.uniform(0, 100), rng.uniform(-5, 5), rng.uniform(0, 3), rng.uniform(0, 30)
            parts = sum(total_hazard(HazardScene([s], []), v, l, d, tau) for s in statics)
            parts += sum(total_hazard(HazardScene([], [s]), v, l, d, tau) for s in dyn)
            sup = max(sup, abs(total_hazard(full, v, l, d, tau) - parts) / max(1.0, abs(parts)))
        # single source never exceeds its peak
        peak_ok = True
        for src in statics:
            vals = static_hazard(HazardScene([src], []), rng.uniform(0, 100, 2000), rng.uniform(-5, 5, 2000))
            peak_ok &= bool(np.all(vals <= src.peak)) and static_hazard(HazardScene([src], []), src.l_m, src.d_m) == src.peak
        for src in dyn:
            sc = HazardScene([], [src])
            vals = dynamic_hazard(sc, rng.uniform(0, 30, 2000), rng.uniform(0, 100, 2000), rng.uniform(-5, 5, 2000),
                                  rng.uniform(0, 3, 2000))
            peak_ok &= bool(np.all((vals >= 0) & (vals <= src.peak)))
        # monotone decay along rays from a static centre
        mono = True
        src = statics[0]
        sc = HazardScene([src], [])
        r = np.linspace(0, 30, 301)
        for ang in np.linspace(0, 2 * math.pi, 37):
            h = static_hazard(sc, src.l_m + r * math.cos(ang), src.d_m + r * math.sin(ang))
            mono &= bool(np.all(np.diff(h) <= 0))
        # logistic midpoint: zero separation, u_rel = 0, beta*L -> 0
        mid_src = DynamicHazardSource(_still(20.0, 2.0), peak=6.0, length=4.0, beta=1e-12)
        mid = dynamic_hazard(HazardScene([], [mid_src]), 0.0, 20.0, 2.0, 0.5)
        info["ok"] = sup <= 1e-12 and peak_ok and mono and abs(mid - 3.0) <= 1e-9
        info["detail"] = (f"superposition rel err {sup:.1e}, peak bound {peak_ok}, radial decay {mono}, "
                          f"midpoint {mid:.12f} (D/2 = 3)")


def test_criterion_6_corridor():
    with criterion(6, 30) as info:
        dt, K, domain = 0.5, 6, (0.0, 60.0)
        sound = match = infeasible = 0
        problems = []
        for seed in range(200):
            rng = np.random.default_rng(600 + seed)
            blocked = random_blocked(rng, K, domain)
            s_now = float(rng.uniform(*domain))
            v_max = float(rng.uniform(2.0, 30.0))
            v_target = float(rng.uniform(0.0, v_max))
            exp = corridor_oracle(blocked, s_now, domain, dt, 0.0, v_max, v_target)
            try:
                c = safe_corridor(blocked, s_now, domain, (K - 1) * dt, dt, 0.0, v_max, v_target)
            except NoFeasibleCorridor:
                c = None
            if exp is None or c is None:
                infeasible += 1
                if (exp is None) == (c is None):
                    match += 1
                    sound += 1
                else:
                    problems.append(seed)
                continue
            b = c.bounds
            ok = all(hi <= lo_b + 1e-9 or lo >= hi_b - 1e-9 for k, (lo, hi) in enumerate(b) for lo_b, hi_b in blocked[k])
            ok &= b[0, 0] <= s_now <= b[0, 1]
            ok &= all(gaps_connected(tuple(b[k - 1]), tuple(b[k]), dt, 0.0, v_max) for k in range(1, K))
            sound += ok
            same = np.allclose(b, np.asarray(exp), atol=1e-9)
            match += same
            if not (ok and same):
                problems.append(seed)
        info["ok"] = sound == 200 and match == 200
        info["detail"] = (f"200 obstacle sets ({infeasible} without a corridor), sound {sound}/200, "
                          f"oracle match {match}/200{'' if not problems else f', mismatched seeds {problems[:5]}'}")


def _trace_clear(log, cfg) -> float:
    """Smallest distance from the executed l to any laterally conflicting blocked interval."""
    worst = math.inf
    for rec, ivs in zip(log.records, blocked_trace(log, cfg)):
        for a, b in ivs:
            worst = min(worst, max(a - rec.l, rec.l - b))
    return worst


def test_criterion_7_scenario_safety():
    with criterion(7, 180) as info:
        parts, ok = [], True
        for name in STOCK:
            scn = load_scenario(name)
            cfg = scn.planner
            log = run(scn)
            k_max = log.metrics.max_curvature
            h_exec = max(r.hazard for r in log.records)
            clear = _trace_clear(log, cfg)
            good = (not log.collided and log.goal_reached and k_max <= cfg.limits.kappa_max
                    and h_exec <= cfg.limits.h_max and clear >= 0.0)
            ok &= good
            parts.append(f"{name}: collided={log.collided} kappa {k_max:.4f}/{cfg.limits.kappa_max:g} "
                         f"hazard {h_exec:.3f}/{cfg.limits.h_max:g} ST clearance {clear:.2f} m")
        info["ok"] = ok
        info["detail"] = "; ".join(parts)


def test_criterion_8_sqp_vs_de():
    with criterion(8, 600) as info:
        scn = load_scenario("overtaking")
        rows = run_comparison(scn, ("SQP", "DE"), None, range(5), scn.planner)
        by = {(r["method"], r["seed"]): r for r in rows}
        jerk_wins = sum(by["SQP", s]["x_j"] < by["DE", s]["x_j"] for s in range(5))
        acc_wins = sum(by["SQP", s]["y_a"] < by["DE", s]["y_a"] for s in range(5))
        safe = all(not by["SQP", s]["collided"] and by["SQP", s]["T"] is not None for s in range(5))
        info["ok"] = jerk_wins == 5 and acc_wins == 5 and safe
        info["detail"] = (
            f"seeds where SQP jerk < DE: {jerk_wins}/5, SQP lateral accel < DE: {acc_wins}/5, SQP safe {safe}; "
            + ", ".join(f"s{s} x_j {by['SQP', s]['x_j']:.3f}/{by['DE', s]['x_j']:.3f} "
                        f"y_a {by['SQP', s]['y_a']:.4f}/{by['DE', s]['y_a']:.4f}" for s in range(5))
        )


def test_criterion_9_mpc():
    with criterion(9, 30) as info:
        path = build_reference([(x, 0.0) for x in np.arange(-100.0, 601.0, 50.0)])
        cfg = MpcConfig(N=20, vehicle=VehicleParams(dt=0.1, v_bounds=(0.0, 30.0)))
        vp = cfg.vehicle
        v = 10.0

        def cruise(t):
            t = np.asarray(t, dtype=float)
            z = np.zeros_like(t)
            return 100.0 + v * t, v + z, z, z, z, z

        s = VehicleState(0.0, 0.5, 0.0, v)
        prev, a_prev = None, 0.0
        ys, bound_err, slack = [], 0.0, 0.0
        for k in range(31):
            ref = mpc_reference(path, cruise, 0.1 * k, cfg.N, cfg.dt, vp.wheelbase)
            sol = control_step(s, ref, cfg, prev=prev, a_prev=a_prev)
            a, d = sol.inputs[:, 0], sol.inputs[:, 1]
            rate = np.abs(np.diff(np.concatenate([[a_prev], a]))) - vp.j_max * vp.dt
            bound_err = max(bound_err, np.max(np.abs(a) - vp.a_max), np.max(np.abs(d) - vp.delta_max), np.max(rate))
            slack = max(slack, sol.max_slack)
            ys.append(abs(s.y))
            s = step(s, sol.first_input, vp)
            prev, a_prev = sol, sol.first_input.a
        info["ok"] = ys[-1] < 0.05 and bound_err <= 1e-8 and slack == 0.0
        info["detail"] = f"|y| after 3 s {ys[-1]:.4f} m (from 0.5), max bound excess {bound_err:.1e}, max slack {slack:g}"


def test_criterion_10_determinism(tmp_path):
    with criterion(10, 180) as info:
        diffs, files = [], 0
        for name in STOCK:
            for command in ("plan", "simulate"):
                outs = []
                for rep in range(2):
                    out = tmp_path / f"{command}_{name}_{rep}"
                    code = main([command, name, "--out", str(out)]) if rep == 0 else main(["rerun", str(outs[0]), "--out", str(out)])
                    assert code == 0
                    outs.append(out)
                for f in sorted(outs[0].glob("*.csv")):
                    files += 1
                    if f.read_bytes() != (outs[1] / f.name).read_bytes():
                        diffs.append(f"{command}_{name}/{f.name}")
        info["ok"] = not diffs and files > 0
        info["detail"] = f"{files} CSV files compared across reruns of every stock scenario, differing: {diffs or 'none'}"
