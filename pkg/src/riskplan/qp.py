"""Dense convex QP solver (primal active set with a phase-1 start).

    min 1/2 x'Qx + c'x   s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import BadProblem

FEAS_TOL = 1e-8
ACTIVE_TOL = 1e-9
MAX_CHANGES = 1000
REG_EPS = 1e-9
PHASE1_RHO = 1e-6


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class QpProblem:
    Q: np.ndarray
    c: np.ndarray
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ineq = np.zeros((0, n)) if self.A_ineq is None else np.asarray(self.A_ineq, dtype=float).reshape(-1, n)
        self.b_ineq = np.zeros(0) if self.b_ineq is None else np.asarray(self.b_ineq, dtype=float).ravel()
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()

    @property
    def n(self) -> int:
        return self.c.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.c @ x)

    def validate(self) -> None:
        n = self.n
        if self.Q.shape != (n, n):
            raise BadProblem(f"Q has shape {self.Q.shape}, expected ({n}, {n})")
        if self.A_ineq.shape[0] != self.b_ineq.size or self.A_eq.shape[0] != self.b_eq.size:
            raise BadProblem("constraint row counts do not match right-hand sides")
        for name in ("Q", "c", "A_ineq", "b_ineq", "A_eq", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise BadProblem(f"{name} has non-finite entries")
        if not np.allclose(self.Q, self.Q.T, atol=1e-10, rtol=0):
            raise BadProblem("Q is not symmetric")
        if n and np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))[0] < -1e-8:
            raise BadProblem("Q is not positive semidefinite")

    def to_text(self) -> str:
        """Plain-text dump: dimensions, then each array row-major."""
        buf = io.StringIO()
        buf.write(f"{self.n} {self.b_ineq.size} {self.b_eq.size}\n")
        for arr in (self.Q, self.c, self.A_ineq, self.b_ineq, self.A_eq, self.b_eq):
            buf.write(" ".join(repr(float(v)) for v in np.ravel(arr)) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "QpProblem":
        lines = text.splitlines()
        n, m, p = (int(v) for v in lines[0].split())
        vals = [np.array([float(v) for v in ln.split()]) for ln in lines[1:7]]
        return cls(
            vals[0].reshape(n, n), vals[1], vals[2].reshape(m, n), vals[3], vals[4].reshape(p, n), vals[5]
        )


@dataclass
class QpSolution:
    theta: np.ndarray
    objective: float
    status: QpStatus
    kkt_residual: float
    active_set: tuple[int, ...]
    multipliers_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    objective_trace: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residual(prob: QpProblem, theta, lam_ineq=None, nu_eq=None) -> float:
    """Max-norm over stationarity, primal/dual feasibility and complementarity."""
    x = np.asarray(theta, dtype=float)
    lam = np.zeros(prob.b_ineq.size) if lam_ineq is None else np.asarray(lam_ineq, dtype=float)
    nu = np.zeros(prob.b_eq.size) if nu_eq is None else np.asarray(nu_eq, dtype=float)
    grad = prob.Q @ x + prob.c + prob.A_ineq.T @ lam + prob.A_eq.T @ nu
    slack = prob.A_ineq @ x - prob.b_ineq
    parts = [np.abs(grad).max(initial=0.0)]
    parts.append(np.maximum(slack, 0).max(initial=0.0))
    parts.append(np.abs(prob.A_eq @ x - prob.b_eq).max(initial=0.0))
    parts.append(np.maximum(-lam, 0).max(initial=0.0))
    parts.append(np.abs(lam * slack).max(initial=0.0))
    return float(max(parts))


def _independent_rows(A: np.ndarray, tol: float = 1e-10) -> list[int]:
    if A.shape[0] == 0:
        return []
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1.0))) if diag.size else 0
    return sorted(int(i) for i in piv[:rank])


def _solve_kkt(Q, g, Aw, rhs_w):
    """Solve [Q Aw'; Aw 0] [p; mu] = [-g; rhs_w] with one refinement pass."""
    n, k = Q.shape[0], Aw.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = Q
    K[:n, n:] = Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-g, rhs_w])
    try:
        lu = scipy.linalg.lu_factor(K, check_finite=False)
        sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        sol = sol + scipy.linalg.lu_solve(lu, rhs - K @ sol, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _active_set_loop(Q, c, A, b, E, e, x, work, max_changes, trace):
    """Primal active set from a feasible x.  ``work`` lists inequality rows.

    Returns (x, work, lam_ineq_on_work, nu, status, changes).
    """
    n = x.size
    changes = 0
    scale = 1.0 + np.abs(x).max(initial=0.0)
    while True:
        Aw = np.vstack([E, A[work]]) if work else E
        g = Q @ x + c
        p, mu = _solve_kkt(Q, g, Aw, np.zeros(Aw.shape[0]))
        if np.abs(p).max(initial=0.0) <= 1e-11 * scale:
            lam_w = mu[E.shape[0]:]
            if not work or lam_w.min() >= -1e-12:
                return x, work, lam_w, mu[: E.shape[0]], QpStatus.OPTIMAL, changes
            if changes >= max_changes:
                return x, work, lam_w, mu[: E.shape[0]], QpStatus.ITERATION_LIMIT, changes
            j = int(np.argmin(lam_w))  # most negative; argmin takes the first on ties
            work = work[:j] + work[j + 1:]
            changes += 1
            continue
        alpha, block = 1.0, None
        if A.shape[0]:
            Ap = A @ p
            cand = np.flatnonzero(Ap > 1e-14 * scale)
            cand = cand[~np.isin(cand, work)]
            if cand.size:
                ratios = np.maximum(b[cand] - A[cand] @ x, 0.0) / Ap[cand]
                r_min = ratios.min()
                if r_min <= 1.0:
                    # ties on the step length go to the fastest-approaching row, then the lowest index
                    tied = cand[ratios <= r_min + 1e-15]
                    block = int(tied[np.argmax(Ap[tied])])
                    alpha = float(r_min)
        x = x + alpha * p
        if trace is not None:
            trace.append(float(0.5 * x @ Q @ x + c @ x))
        scale = 1.0 + np.abs(x).max(initial=0.0)
        if block is not None:
            if changes >= max_changes:
                return x, work, np.zeros(len(work)), np.zeros(E.shape[0]), QpStatus.ITERATION_LIMIT, changes
            work = sorted(work + [block])
            changes += 1


def _warm_working_set(A, b, E, x, candidates) -> list[int]:
    """Active rows of ``candidates`` at x, kept only while independent of E and each other."""
    work: list[int] = []
    rows = E
    for i in sorted(set(int(i) for i in candidates)):
        if abs(A[i] @ x - b[i]) > ACTIVE_TOL * (1 + abs(b[i])):
            continue
        trial = np.vstack([rows, A[i]])
        if np.linalg.matrix_rank(trial, tol=1e-10) == trial.shape[0]:
            work.append(i)
            rows = trial
    return work


def _phase1(A, b, E, e, x0):
    """Feasible point via min t + rho/2 (|x - x0|^2 + t^2) s.t. Ax - t <= b, Ex = e, t >= 0.

    Returns (x, working set of inequality rows) or None if infeasible.
    """
    n = x0.size
    if E.shape[0]:
        x_start = x0 + np.linalg.lstsq(E, e - E @ x0, rcond=None)[0]
        if np.abs(E @ x_start - e).max() > FEAS_TOL * (1 + np.abs(e).max()):
            return None
    else:
        x_start = x0.copy()
    viol = A @ x_start - b if A.shape[0] else np.zeros(0)
    if viol.size == 0 or viol.max() <= FEAS_TOL:
        return x_start, []
    t0 = float(viol.max()) + 1.0
    m = A.shape[0]
    Q1 = PHASE1_RHO * np.eye(n + 1)
    c1 = np.zeros(n + 1)
    c1[:n] = -PHASE1_RHO * x0
    c1[n] = 1.0
    A1 = np.zeros((m + 1, n + 1))
    A1[:m, :n] = A
    A1[:m, n] = -1.0
    A1[m, n] = -1.0
    b1 = np.concatenate([b, [0.0]])
    E1 = np.hstack([E, np.zeros((E.shape[0], 1))])
    z, work, *_ , status, _ = _active_set_loop(
        Q1, c1, A1, b1, E1, e, np.concatenate([x_start, [t0]]), [], 4 * MAX_CHANGES, None
    )
    x, t = z[:n], z[n]
    if t > FEAS_TOL * (1 + np.abs(b).max(initial=0.0)):
        return None
    work = [i for i in work if i < m]
    return x, _warm_working_set(A, b, E, x, work)


def solve(
    prob: QpProblem,
    x0: Optional[np.ndarray] = None,
    working_set: Optional[Sequence[int]] = None,
    max_changes: int = MAX_CHANGES,
    record_trace: bool = False,
) -> QpSolution:
    """Solve the QP.  ``x0``/``working_set`` warm-start the iteration.

    Infeasible and IterationLimit are reported through ``status``; malformed
    problems raise ``BadProblem``.
    """
    prob.validate()
    n = prob.n
    Q = 0.5 * (prob.Q + prob.Q.T)
    if n and np.linalg.eigvalsh(Q)[0] < REG_EPS:
        Q = Q + REG_EPS * np.eye(n)
    A, b = prob.A_ineq, prob.b_ineq
    keep = _independent_rows(prob.A_eq)
    E, e = prob.A_eq[keep], prob.b_eq[keep]

    start = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    feasible_start = (
        (A.shape[0] == 0 or (A @ start - b).max() <= ACTIVE_TOL)
        and (E.shape[0] == 0 or np.abs(E @ start - e).max() <= ACTIVE_TOL)
    )
    if feasible_start:
        x, work = start, _warm_working_set(A, b, E, start, working_set or [])
    else:
        ph = _phase1(A, b, E, e, start)
        if ph is None:
            return _infeasible(prob, start)
        x, work = ph

    trace: Optional[list] = [prob.objective(x)] if record_trace else None
    x, work, lam_w, nu, status, changes = _active_set_loop(Q, prob.c, A, b, E, e, x, work, max_changes, trace)

    if status is QpStatus.OPTIMAL:
        # polish: re-solve the equality-constrained problem on the final working set
        Aw = np.vstack([E, A[work]]) if work else E
        rhs = np.concatenate([e, b[work]]) if work else e
        x_p, mu = _solve_kkt(Q, prob.c, Aw, rhs)
        if (A.shape[0] == 0 or (A @ x_p - b).max() <= FEAS_TOL) and np.all(mu[E.shape[0]:] >= -FEAS_TOL):
            x, nu, lam_w = x_p, mu[: E.shape[0]], mu[E.shape[0]:]

    lam = np.zeros(A.shape[0])
    lam[work] = lam_w if len(lam_w) == len(work) else 0.0
    nu_full = np.zeros(prob.b_eq.size)
    nu_full[keep] = nu
    res = kkt_residual(prob, x, lam, nu_full)
    return QpSolution(
        theta=x,
        objective=prob.objective(x),
        status=status,
        kkt_residual=res,
        active_set=tuple(work),
        multipliers_ineq=lam,
        multipliers_eq=nu_full,
        iterations=changes,
        objective_trace=trace or [],
    )


def _infeasible(prob: QpProblem, x: np.ndarray) -> QpSolution:
    return QpSolution(
        theta=x, objective=prob.objective(x), status=QpStatus.INFEASIBLE, kkt_residual=float("inf"),
        active_set=(), multipliers_ineq=np.zeros(prob.b_ineq.size), multipliers_eq=np.zeros(prob.b_eq.size),
    )


def violated_rows(prob: QpProblem, x, tol: float = FEAS_TOL) -> np.ndarray:
    return np.flatnonzero(prob.A_ineq @ np.asarray(x) - prob.b_ineq > tol)
