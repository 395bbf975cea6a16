"""Receding-horizon tracking controller.

The horizon problem is condensed into a QP over the input sequence by
forward substitution of the per-step linearized bicycle model.  Corridor
bounds act on the arc length of the predicted position, linearized about the
reference point, and carry non-negative slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CorridorGap, HorizonMismatch, QpInfeasible
from .frenet import ReferencePath, cartesian_motion
from .qp import QpProblem, QpSolution, QpStatus, solve
from .st_graph import SafeCorridor
from .vehicle import ControlInput, VehicleParams, VehicleState, linearize


def _diag(*v):
    return np.diag(np.array(v, dtype=float))


@dataclass(frozen=True)
class MpcConfig:
    N: int = 30
    Q_state: np.ndarray = field(default_factory=lambda: _diag(10, 10, 1, 1))
    R_input: np.ndarray = field(default_factory=lambda: _diag(1, 10))
    Q_f: Optional[np.ndarray] = None
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    slack_weight: float = 1e4
    sparse: bool = False

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        Q = np.asarray(self.Q_state, dtype=float)
        R = np.asarray(self.R_input, dtype=float)
        Qf = 5.0 * Q if self.Q_f is None else np.asarray(self.Q_f, dtype=float)
        object.__setattr__(self, "Q_state", Q)
        object.__setattr__(self, "R_input", R)
        object.__setattr__(self, "Q_f", Qf)
        for name, M, shape in (("Q_state", Q, (4, 4)), ("Q_f", Qf, (4, 4)), ("R_input", R, (2, 2))):
            if M.shape != shape or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be a symmetric {shape} matrix")
        if np.linalg.eigvalsh(Q)[0] < -1e-12 or np.linalg.eigvalsh(Qf)[0] < -1e-12:
            raise ValueError("state weights must be positive semidefinite")
        if np.linalg.eigvalsh(R)[0] <= 0:
            raise ValueError("R_input must be positive definite")

    @property
    def dt(self) -> float:
        return self.vehicle.dt


@dataclass(frozen=True)
class MpcReference:
    """Reference over one horizon: N+1 states, N feed-forward inputs, and the
    Frenet data used to linearize the corridor constraint."""

    t: np.ndarray  # (N+1,) absolute times
    states: np.ndarray  # (N+1, 4) x, y, theta, v
    inputs: np.ndarray  # (N, 2) a, delta
    l: np.ndarray
    d: np.ndarray
    tangent: np.ndarray  # (N+1, 2) path unit tangent at l
    kappa_path: np.ndarray

    @property
    def N(self) -> int:
        return len(self.t) - 1

    def corridor_weights(self) -> np.ndarray:
        """ds/d(x, y) of the arc-length projection at the reference points."""
        return self.tangent / (1.0 - self.kappa_path * self.d)[:, None]


FrenetFn = Callable[[np.ndarray], tuple]


def build_reference(
    path: ReferencePath, frenet_fn: FrenetFn, t0: float, N: int, dt: float, wheelbase: float
) -> MpcReference:
    """Sample ``frenet_fn(t) -> (l, l', l'', d, d', d'')`` at the MPC timestamps."""
    t = t0 + dt * np.arange(N + 1)

    def cart(tt):
        l, ld, ldd, d, dd, ddd = (np.asarray(v, dtype=float) for v in frenet_fn(tt))
        lc = np.clip(l, 0.0, path.total_length)
        return (l, d, lc) + tuple(cartesian_motion(path, lc, ld, ldd, d, dd, ddd))

    l, d, lc, x, y, th, v, kap = cart(t)
    h = 1e-4
    v_plus = cart(t + h)[6]
    v_minus = cart(np.maximum(t - h, t0))[6]
    a_ref = (v_plus - v_minus) / (t + h - np.maximum(t - h, t0))
    states = np.column_stack([x, y, np.unwrap(th), v])
    delta = np.arctan(wheelbase * kap)
    inputs = np.column_stack([a_ref[:-1], delta[:-1]])
    phi = path.heading(lc)
    tangent = np.column_stack([np.cos(phi), np.sin(phi)])
    return MpcReference(t, states, inputs, l, d, tangent, np.asarray(path.curvature(lc), dtype=float))


@dataclass
class MpcSolution:
    inputs: np.ndarray  # (N, 2)
    predicted_states: np.ndarray  # (N+1, 4)
    qp: QpSolution
    model: list  # per-step (A, B, r)
    slack: np.ndarray
    t0: float = 0.0

    @property
    def first_input(self) -> ControlInput:
        return ControlInput(float(self.inputs[0, 0]), float(self.inputs[0, 1]))

    @property
    def max_slack(self) -> float:
        return float(self.slack.max(initial=0.0))

    def replay(self, x0=None) -> np.ndarray:
        x = np.asarray(self.predicted_states[0] if x0 is None else x0, dtype=float)
        out = [x]
        for (A, B, r), u in zip(self.model, self.inputs):
            x = A @ x + B @ u + r
            out.append(x)
        return np.array(out)


@dataclass
class AssembledQp:
    problem: QpProblem
    model: list
    G: np.ndarray  # (N+1, 4, n_u) input-to-state map
    h: np.ndarray  # (N+1, 4) free response
    families: list  # constraint family per inequality row
    n_u: int
    n_slack: int
    corridor_rows: np.ndarray


def _align_heading(ref_theta: np.ndarray, theta0: float) -> np.ndarray:
    shift = 2.0 * math.pi * round((theta0 - ref_theta[0]) / (2.0 * math.pi))
    return ref_theta + shift


def _nominal(s0: np.ndarray, ref: MpcReference, prev: Optional[MpcSolution], dt: float):
    """Linearization trajectory: previous prediction shifted by one step, or the reference."""
    N = ref.N
    if prev is not None and len(prev.inputs) == N:
        xs = np.vstack([prev.predicted_states[1:], prev.predicted_states[-1:]])
        us = np.vstack([prev.inputs[1:], prev.inputs[-1:]])
        xs = xs.copy()
        xs[0] = s0
        xs[:, 2] = _align_heading(np.unwrap(xs[:, 2]), s0[2])
        return xs, us
    xs = ref.states.copy()
    xs[0] = s0
    return xs, ref.inputs.copy()


def assemble_qp(
    s0: VehicleState,
    ref: MpcReference,
    cfg: MpcConfig,
    corridor: Optional[SafeCorridor] = None,
    nominal: Optional[MpcSolution] = None,
    a_prev: Optional[float] = None,
    corridor_t0: float = 0.0,
    sparse: Optional[bool] = None,
) -> AssembledQp:
    """Build the horizon QP.

    Decision vector is ``[a_0, delta_0, ..., a_{N-1}, delta_{N-1}, sigma_1..sigma_N]``
    (condensed) or additionally the stacked states ``x_1..x_N`` (sparse).
    ``corridor_t0`` is the absolute time of the corridor's time zero.
    """
    N, vp = cfg.N, cfg.vehicle
    dt = vp.dt
    if ref.N != N:
        raise HorizonMismatch(f"reference has {ref.N} steps, controller expects {N}")
    if not np.allclose(np.diff(ref.t), dt, atol=1e-9):
        raise HorizonMismatch("reference timestamps do not match the controller step")
    x0 = np.asarray(s0, dtype=float).copy()
    ref_states = ref.states.copy()
    ref_states[:, 2] = _align_heading(ref_states[:, 2], x0[2])
    xs_nom, us_nom = _nominal(x0, ref, nominal, dt)

    model = [linearize(xs_nom[k], us_nom[k], vp) for k in range(N)]
    n_u = 2 * N
    G = np.zeros((N + 1, 4, n_u))
    h = np.zeros((N + 1, 4))
    h[0] = x0
    for k, (A, B, r) in enumerate(model):
        G[k + 1] = A @ G[k]
        G[k + 1][:, 2 * k: 2 * k + 2] += B
        h[k + 1] = A @ h[k] + r

    use_corr = corridor is not None
    if use_corr:
        rel = ref.t[1:] - corridor_t0
        if rel[0] < corridor.times[0] - 1e-9 or rel[-1] > corridor.times[-1] + 1e-9:
            raise CorridorGap(
                f"horizon [{rel[0]:.2f}, {rel[-1]:.2f}] s outside corridor "
                f"[{corridor.times[0]:.2f}, {corridor.times[-1]:.2f}] s"
            )
        s_lo, s_hi = corridor.bounds_at(rel)
    n_s = N if use_corr else 0

    # cost over (U, sigma) in condensed form
    Qs = [cfg.Q_state] * (N - 1) + [cfg.Q_f]
    H = np.zeros((n_u, n_u))
    f = np.zeros(n_u)
    for k in range(1, N + 1):
        Gk, Wk = G[k], Qs[k - 1]
        e = h[k] - ref_states[k]
        H += 2.0 * Gk.T @ Wk @ Gk
        f += 2.0 * Gk.T @ Wk @ e
    R = cfg.R_input
    for k in range(N):
        H[2 * k: 2 * k + 2, 2 * k: 2 * k + 2] += 2.0 * R
        f[2 * k: 2 * k + 2] -= 2.0 * R @ ref.inputs[k]

    # each row: z_row . z + m . x_k <= b   (k = 0 means no state term)
    rows, srows, rhs, fam = [], [], [], []
    nz = n_u + n_s

    def add(row, b, family, k=0, m=None):
        rows.append(row)
        srows.append((k, np.zeros(4) if m is None else m))
        rhs.append(b)
        fam.append(family)

    for k in range(N):
        for j, lim, name in ((0, vp.a_max, "accel"), (1, vp.delta_max, "steering")):
            r = np.zeros(nz)
            r[2 * k + j] = 1.0
            add(r, lim, name)
            add(-r, lim, name)
    jl = vp.j_max * dt
    if a_prev is not None:
        r = np.zeros(nz)
        r[0] = 1.0
        add(r, a_prev + jl, "jerk")
        add(-r, -a_prev + jl, "jerk")
    for k in range(N - 1):
        r = np.zeros(nz)
        r[2 * k + 2], r[2 * k] = 1.0, -1.0
        add(r, jl, "jerk")
        add(-r, jl, "jerk")
    v_lo, v_hi = vp.v_bounds
    e_v = np.array([0.0, 0.0, 0.0, 1.0])
    for k in range(1, N + 1):
        add(np.zeros(nz), v_hi, "speed", k, e_v)
        add(np.zeros(nz), -v_lo, "speed", k, -e_v)
    corridor_rows = []
    if use_corr:
        w = ref.corridor_weights()
        for k in range(1, N + 1):
            # s_k ~= l_ref + w . (p_k - p_ref) = w . p_k + s_off
            m = np.array([w[k, 0], w[k, 1], 0.0, 0.0])
            s_off = ref.l[k] - w[k] @ ref_states[k, :2]
            r = np.zeros(nz)
            r[n_u + k - 1] = -1.0
            corridor_rows.append(len(rows))
            add(r, s_hi[k - 1] - s_off, "corridor", k, m)
            corridor_rows.append(len(rows))
            add(r.copy(), s_off - s_lo[k - 1], "corridor", k, -m)
            add(r.copy(), 0.0, "slack")

    Hz = np.zeros((nz, nz))
    Hz[:n_u, :n_u] = H
    fz = np.zeros(nz)
    fz[:n_u] = f
    if n_s:
        Hz[n_u:, n_u:] = 2.0 * np.eye(n_s)
        fz[n_u:] = cfg.slack_weight
    Hz = 0.5 * (Hz + Hz.T)
    b_in = np.array(rhs, dtype=float)

    if sparse if sparse is not None else cfg.sparse:
        prob = _to_sparse(rows, srows, b_in, model, ref_states, ref.inputs, cfg, x0, n_u, n_s)
    else:
        A_in = np.array(rows) if rows else np.zeros((0, nz))
        for i, (k, m) in enumerate(srows):
            if k:
                A_in[i, :n_u] += m @ G[k]
                b_in[i] -= m @ h[k]
        prob = QpProblem(Hz, fz, A_in, b_in)
    return AssembledQp(prob, model, G, h, fam, n_u, n_s, np.array(corridor_rows, dtype=int))


def _to_sparse(rows, srows, b_in, model, ref_states, ref_inputs, cfg, x0, n_u, n_s):
    """Same problem with states kept as variables and the dynamics as equalities.

    Variables: [U (n_u), sigma (n_s), X_1..X_N (4N)].
    """
    N = cfg.N
    nx = 4 * N
    off = n_u + n_s
    nz = off + nx
    Q = np.zeros((nz, nz))
    c = np.zeros(nz)
    R = cfg.R_input
    for k in range(N):
        Q[2 * k: 2 * k + 2, 2 * k: 2 * k + 2] = 2.0 * R
        c[2 * k: 2 * k + 2] = -2.0 * R @ ref_inputs[k]
    if n_s:
        Q[n_u:off, n_u:off] = 2.0 * np.eye(n_s)
        c[n_u:off] = cfg.slack_weight
    for k in range(1, N + 1):
        W = cfg.Q_f if k == N else cfg.Q_state
        o = off + 4 * (k - 1)
        Q[o:o + 4, o:o + 4] = 2.0 * W
        c[o:o + 4] = -2.0 * W @ ref_states[k]
    # x_{k+1} - A_k x_k - B_k u_k = r_k, with x_0 known
    E = np.zeros((nx, nz))
    e = np.zeros(nx)
    for k, (A, B, r) in enumerate(model):
        rs = slice(4 * k, 4 * k + 4)
        E[rs, off + 4 * k: off + 4 * k + 4] = np.eye(4)
        E[rs, 2 * k: 2 * k + 2] = -B
        if k == 0:
            e[rs] = A @ x0 + r
        else:
            E[rs, off + 4 * (k - 1): off + 4 * k] = -A
            e[rs] = r
    A_s = np.zeros((len(rows), nz))
    for i, (row, (k, m)) in enumerate(zip(rows, srows)):
        A_s[i, :off] = row
        if k:
            A_s[i, off + 4 * (k - 1): off + 4 * k] = m
    return QpProblem(Q, c, A_s, b_in, E, e)


def _warm_start(asm: AssembledQp, prev: Optional[MpcSolution], ref: MpcReference, cfg: MpcConfig, a_prev):
    """Shifted previous inputs (or the feed-forward) clipped to the boxes, slack sized to fit."""
    N, vp = cfg.N, cfg.vehicle
    if prev is not None and len(prev.inputs) == N:
        U = np.vstack([prev.inputs[1:], prev.inputs[-1:]])
    else:
        U = ref.inputs.copy()
    U = U.copy()
    U[:, 1] = np.clip(U[:, 1], -vp.delta_max, vp.delta_max)
    jl = vp.j_max * vp.dt
    a = a_prev if a_prev is not None else U[0, 0]
    for k in range(N):
        lo, hi = (a - jl, a + jl) if (k > 0 or a_prev is not None) else (-vp.a_max, vp.a_max)
        U[k, 0] = float(np.clip(U[k, 0], max(lo, -vp.a_max), min(hi, vp.a_max)))
        a = U[k, 0]
    z = np.zeros(asm.problem.n)
    z[: asm.n_u] = U.ravel()
    if asm.n_slack:
        A, b = asm.problem.A_ineq, asm.problem.b_ineq
        viol = A[:, : asm.n_u] @ z[: asm.n_u] - b
        for i in asm.corridor_rows:
            k = int(np.flatnonzero(A[i, asm.n_u:])[0])
            z[asm.n_u + k] = max(z[asm.n_u + k], viol[i] + 1e-9)
    return z


def control_step(
    s0: VehicleState,
    ref: MpcReference,
    cfg: MpcConfig,
    corridor: Optional[SafeCorridor] = None,
    prev: Optional[MpcSolution] = None,
    a_prev: Optional[float] = None,
    corridor_t0: float = 0.0,
    warm: bool = True,
) -> MpcSolution:
    """Solve one horizon; the caller applies ``inputs[0]`` only."""
    asm = assemble_qp(s0, ref, cfg, corridor, prev, a_prev, corridor_t0, sparse=False)
    z0 = _warm_start(asm, prev, ref, cfg, a_prev) if warm else None
    ws = prev.qp.active_set if (warm and prev is not None) else None
    sol = solve(asm.problem, x0=z0, working_set=ws)
    if sol.status is not QpStatus.OPTIMAL:
        fams = sorted({asm.families[i] for i in np.flatnonzero(asm.problem.A_ineq @ sol.theta - asm.problem.b_ineq > 1e-8)})
        family = ",".join(fams) or sol.status.value
        raise QpInfeasible(f"MPC QP {sol.status.value} ({family})", family=family)
    U = sol.theta[: asm.n_u].reshape(cfg.N, 2)
    x = np.asarray(s0, dtype=float)
    pred = [x]
    for (A, B, r), u in zip(asm.model, U):
        x = A @ x + B @ u + r
        pred.append(x)
    slack = sol.theta[asm.n_u: asm.n_u + asm.n_slack]
    return MpcSolution(U, np.array(pred), sol, asm.model, slack, float(ref.t[0]))
