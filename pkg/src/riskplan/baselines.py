"""Derivative-free optimizers over the continuous end-state box.

Each optimizer minimizes a black-box objective on ``[lo, hi]`` (one bound
pair per coordinate) within a fixed evaluation budget.  They plug into the
planner as a replacement for exhaustive grid selection, so a comparison
differs only in how the end state is searched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AllInfeasible, UnknownMethod
from .sampler import CandidateSet

PENALTY_BASE = 1e6


class Method(str, Enum):
    DE = "DE"
    PSO = "PSO"
    PatternSearch = "P_S"


def parse_method(name: str) -> Method:
    aliases = {"DE": Method.DE, "PSO": Method.PSO, "P_S": Method.PatternSearch, "PS": Method.PatternSearch,
               "PATTERNSEARCH": Method.PatternSearch}
    try:
        return aliases[name.upper().replace("-", "_")]
    except KeyError:
        raise UnknownMethod(f"unknown method {name!r}") from None


@dataclass(frozen=True)
class BaselineConfig:
    method: Method = Method.DE
    population: int = 12
    max_evals: int = 132
    seed: int = 0
    bounds: tuple = ((0.0, 1.0),)

    def __post_init__(self):
        if self.method == Method.DE and self.population < 4:
            raise ValueError("DE needs population >= 4")
        if self.method == Method.PSO and self.population < 2:
            raise ValueError("PSO needs population >= 2")
        if self.max_evals < self.population:
            raise ValueError("max_evals must be at least the population")
        for lo, hi in self.bounds:
            if not hi >= lo:
                raise ValueError(f"bad bound ({lo}, {hi})")


@dataclass
class OptimizeResult:
    x: np.ndarray
    cost: float
    evals: int
    status: str  # "Converged" or "BudgetExhausted"
    history: list = field(default_factory=list)  # every evaluated point, in order


class _Counter:
    """Budgeted objective wrapper that records the evaluation sequence."""

    def __init__(self, f: Callable[[np.ndarray], float], lo, hi, budget: int):
        self.f, self.lo, self.hi, self.budget = f, lo, hi, budget
        self.history: list = []
        self.best_x: Optional[np.ndarray] = None
        self.best_f = math.inf

    @property
    def left(self) -> int:
        return self.budget - len(self.history)

    def __call__(self, x: np.ndarray) -> float:
        x = np.clip(x, self.lo, self.hi)
        val = float(self.f(x.copy()))
        self.history.append((x.copy(), val))
        if val < self.best_f:
            self.best_f, self.best_x = val, x.copy()
        return val


def _de(ev: _Counter, cfg: BaselineConfig, rng: np.random.Generator, F=0.8, CR=0.9) -> str:
    lo, hi = ev.lo, ev.hi
    n, dim = cfg.population, lo.size
    pop = lo + rng.random((n, dim)) * (hi - lo)
    fit = np.array([ev(p) for p in pop])
    while ev.left > 0:
        for i in range(n):
            if ev.left <= 0:
                return "BudgetExhausted"
            a, b, c = rng.choice([j for j in range(n) if j != i], 3, replace=False)
            mutant = np.clip(pop[a] + F * (pop[b] - pop[c]), lo, hi)
            mask = rng.random(dim) < CR
            mask[rng.integers(dim)] = True
            trial = np.where(mask, mutant, pop[i])
            f = ev(trial)
            if f <= fit[i]:
                pop[i], fit[i] = trial, f
    return "BudgetExhausted"


def _pso(ev: _Counter, cfg: BaselineConfig, rng: np.random.Generator, w=0.7, c1=1.5, c2=1.5) -> str:
    lo, hi = ev.lo, ev.hi
    n, dim = cfg.population, lo.size
    vmax = 0.2 * (hi - lo)
    x = lo + rng.random((n, dim)) * (hi - lo)
    v = (rng.random((n, dim)) * 2.0 - 1.0) * vmax
    pbest = x.copy()
    pfit = np.array([ev(p) for p in x])
    g = int(np.argmin(pfit))
    while ev.left > 0:
        for i in range(n):
            if ev.left <= 0:
                return "BudgetExhausted"
            r1, r2 = rng.random(dim), rng.random(dim)
            v[i] = np.clip(w * v[i] + c1 * r1 * (pbest[i] - x[i]) + c2 * r2 * (pbest[g] - x[i]), -vmax, vmax)
            x[i] = np.clip(x[i] + v[i], lo, hi)
            f = ev(x[i])
            if f < pfit[i]:
                pbest[i], pfit[i] = x[i].copy(), f
                if f < pfit[g]:
                    g = i
    return "BudgetExhausted"


def _pattern(ev: _Counter, cfg: BaselineConfig, rng: np.random.Generator, expand=2.0, contract=0.5) -> str:
    """Coordinate pattern search from the box centre, polling +e_i then -e_i."""
    lo, hi = ev.lo, ev.hi
    span = hi - lo
    tol = 1e-4 * span
    x = 0.5 * (lo + hi)
    fx = ev(x)
    step = 0.25 * span
    while ev.left > 0:
        if np.all(step <= tol):
            return "Converged"
        improved = False
        for i in range(lo.size):
            if step[i] <= tol[i]:
                continue
            for sgn in (1.0, -1.0):
                if ev.left <= 0:
                    return "BudgetExhausted"
                y = x.copy()
                y[i] = np.clip(y[i] + sgn * step[i], lo[i], hi[i])
                if y[i] == x[i]:
                    continue
                fy = ev(y)
                if fy < fx:
                    x, fx, improved = y, fy, True
                    break
        step = np.minimum(step * expand, span) if improved else step * contract
    return "BudgetExhausted"


_RUNNERS = {Method.DE: _de, Method.PSO: _pso, Method.PatternSearch: _pattern}


def optimize(objective: Callable[[np.ndarray], float], cfg: BaselineConfig) -> OptimizeResult:
    """Minimize ``objective`` over ``cfg.bounds`` with at most ``cfg.max_evals`` calls."""
    lo = np.array([b[0] for b in cfg.bounds], dtype=float)
    hi = np.array([b[1] for b in cfg.bounds], dtype=float)
    ev = _Counter(objective, lo, hi, cfg.max_evals)
    rng = np.random.default_rng(cfg.seed)
    status = _RUNNERS[cfg.method](ev, cfg, rng)
    return OptimizeResult(ev.best_x, ev.best_f, len(ev.history), status, ev.history)


def penalized(cost: Optional[float], violation: float = 0.0, ill_conditioned: bool = False) -> float:
    """Objective value handed to an optimizer.

    Feasible costs (``cost`` given) are capped below ``PENALTY_BASE``; an
    infeasible end state scores the base plus its violation magnitude.
    """
    if ill_conditioned:
        return PENALTY_BASE + 1e3
    if cost is not None:
        return min(cost, PENALTY_BASE * 0.5)
    return PENALTY_BASE + violation


def make_selector(method: Method, budget: Optional[int] = None, population: int = 12):
    """A planner selector that searches the sampler's box with ``method``.

    Infeasible end states score ``PENALTY_BASE + violation magnitude`` so any
    feasible one ranks ahead.  The default budget equals the grid size.
    """
    from .planner import assess, make_candidate

    def select(start, scene, path, ref, cfg, seed):
        sd = cfg.sampler
        bounds = ((start.l + sd.l_range[0], start.l + sd.l_range[1]), tuple(sd.d_range), tuple(sd.tau_range))
        n = budget or int(np.prod(sd.counts))
        out = CandidateSet()
        evaluated: list = []

        def objective(x):
            idx = len(evaluated)
            try:
                c = make_candidate(start, float(x[0]), float(x[1]), float(x[2]), cfg, idx)
            except Exception as exc:  # IllConditioned
                out.dropped.append((idx, tuple(x), str(exc)))
                evaluated.append(None)
                return penalized(None, ill_conditioned=True)
            mag = assess(c, scene, start, path, ref)
            out.candidates.append(c)
            evaluated.append(c)
            return penalized(c.cost.total if c.feasible else None, mag)

        bc = BaselineConfig(method, min(population, n), n, seed, bounds)
        res = optimize(objective, bc)
        feas = [c for c in out if c.feasible]
        if not feas:
            err = AllInfeasible(f"{method.value}: no feasible end state in {res.evals} evaluations")
            err.candidates = out
            raise err
        best = min(feas, key=lambda c: (c.cost.total, c.index))
        return best, out

    return select


def selector_for(name: str, budget: Optional[int] = None):
    """``None`` for the grid pipeline ("SQP"), otherwise a baseline selector."""
    if name.upper() == "SQP":
        return None
    return make_selector(parse_method(name), budget)


def _compare_one(scenario, cfg, method: str, seed: int, budget: Optional[int]) -> dict:
    from .sim import run

    label = "SQP" if method.upper() == "SQP" else parse_method(method).value
    log = run(scenario, cfg, seed=seed, selector=selector_for(method, budget), method=label)
    return {"method": label, "seed": seed, **log.metrics.row()}


def run_comparison(scenario, methods: Sequence[str] = ("SQP", "DE", "PSO", "P_S"), budget: Optional[int] = None,
                   seeds: Sequence[int] = (0,), cfg=None, jobs: int = 1) -> list[dict]:
    """Closed-loop run per method and seed; one metric row each, ordered by seed then method.

    Every baseline gets the same per-replan evaluation budget (the grid size
    unless ``budget`` is given).  ``jobs > 1`` fans the runs over processes;
    the row order does not depend on it.
    """
    for m in methods:
        selector_for(m)  # validate names before any run
    tasks = [(scenario, cfg, m, s, budget) for s in seeds for m in methods]
    if jobs <= 1:
        return [_compare_one(*t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_compare_one, *t) for t in tasks]
        return [f.result() for f in futures]
