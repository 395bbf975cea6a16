import numpy as np
import pytest
from hypothesis import given, strategies as st

from riskplan.baselines import (
    PENALTY_BASE, BaselineConfig, Method, optimize, parse_method, penalized, selector_for,
)
from riskplan.errors import UnknownMethod

BOX = ((-5.0, 5.0), (0.0, 10.0), (1.0, 3.0))
TARGET = np.array([1.3, 7.2, 2.1])


def sphere(x):
    return float(np.sum((x - TARGET) ** 2))


@pytest.mark.parametrize("method", [Method.DE, Method.PSO])
def test_sphere(method):
    res = optimize(sphere, BaselineConfig(method, 20, 2000, 3, BOX))
    assert np.max(np.abs(res.x - TARGET)) < 1e-2
    assert res.evals == 2000 and res.status == "BudgetExhausted"


def test_pattern_box_projection():
    centre = np.array([-9.0, 4.0, 2.7])  # first coordinate outside the box
    weights = np.array([1.0, 3.0, 0.5])
    res = optimize(lambda x: float(np.sum(weights * (x - centre) ** 2)),
                   BaselineConfig(Method.PatternSearch, 1, 5000, 0, BOX))
    lo, hi = np.array(BOX).T
    expect = np.clip(centre, lo, hi)
    assert res.status == "Converged"
    assert np.all(np.abs(res.x - expect) <= 1e-4 * (hi - lo) * 4)


@pytest.mark.parametrize("method", list(Method))
def test_deterministic(method):
    cfg = BaselineConfig(method, 8, 300, 42, BOX)
    a, b = optimize(sphere, cfg), optimize(sphere, cfg)
    assert [tuple(x) for x, _ in a.history] == [tuple(x) for x, _ in b.history]
    assert np.array_equal(a.x, b.x) and a.cost == b.cost


@pytest.mark.parametrize("method", list(Method))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_box_respect_and_budget(method, seed):
    seen = []

    def f(x):
        seen.append(x.copy())
        return float(np.sum(np.sin(3 * x)) + np.sum(x))  # pushes toward the lower corner

    res = optimize(f, BaselineConfig(method, 10, 250, seed, BOX))
    lo, hi = np.array(BOX).T
    pts = np.array(seen)
    assert np.all(pts >= lo) and np.all(pts <= hi)
    assert len(seen) == res.evals <= 250


def test_seeds_differ():
    a = optimize(sphere, BaselineConfig(Method.DE, 8, 100, 0, BOX))
    b = optimize(sphere, BaselineConfig(Method.DE, 8, 100, 1, BOX))
    assert not np.array_equal(a.history[0][0], b.history[0][0])


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(Method.DE, population=3)
    with pytest.raises(ValueError):
        BaselineConfig(Method.PSO, population=1)
    with pytest.raises(ValueError):
        BaselineConfig(Method.DE, population=10, max_evals=5)
    with pytest.raises(ValueError):
        BaselineConfig(bounds=((1.0, 0.0),))


def test_method_names():
    assert parse_method("de") is Method.DE
    assert parse_method("P_S") is Method.PatternSearch
    assert parse_method("pattern-search".replace("-", "")) is Method.PatternSearch
    with pytest.raises(UnknownMethod):
        parse_method("GA")
    assert selector_for("SQP") is None
    assert callable(selector_for("PSO"))


@given(st.floats(0, 1e12, allow_nan=False), st.floats(0, 1e12, allow_nan=False))
def test_penalty_dominance(cost, violation):
    assert penalized(cost) < penalized(None, violation)
    assert penalized(cost) < penalized(None, ill_conditioned=True)
    assert penalized(None, violation) >= PENALTY_BASE
