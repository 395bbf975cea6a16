"""Longitudinal motion prediction for surrounding vehicles.

Three driving styles: Normal (constant speed), Aggressive (constant
acceleration, stopping at zero speed) and Uncertain (piecewise-constant
random acceleration drawn from a counter-based PRNG keyed on the obstacle's
seed, so every query is reproducible and order independent).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidHorizon, NegativeTime

UNCERTAIN_PIECE = 0.5  # s, acceleration resampling period
UNCERTAIN_ACCEL = 2.0  # m/s^2, uniform bound
UNCERTAIN_VMAX = 40.0  # m/s


class Style(str, enum.Enum):
    NORMAL = "Normal"
    AGGRESSIVE = "Aggressive"
    UNCERTAIN = "Uncertain"


@dataclass(frozen=True)
class ObstacleState:
    s0: float
    v0: float
    a0: float = 0.0
    d0: float = 0.0
    length: float = 4.5
    width: float = 1.8
    style: Style = Style.NORMAL
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "style", Style(self.style))
        if self.length <= 0 or self.width <= 0:
            raise ValueError("obstacle length and width must be positive")
        if self.v0 < 0:
            raise ValueError("obstacle initial speed must be non-negative")


@dataclass(frozen=True)
class PredictedTrack:
    """Samples of (tau, l, d, v) at a fixed step ``dt``."""

    tau: np.ndarray
    l: np.ndarray
    d: np.ndarray
    v: np.ndarray
    dt: float

    @property
    def horizon(self) -> float:
        return float(self.tau[-1])

    def at(self, tau):
        """Linearly interpolated (l, d, v) at ``tau``."""
        return (
            np.interp(tau, self.tau, self.l),
            np.interp(tau, self.tau, self.d),
            np.interp(tau, self.tau, self.v),
        )


def _advance(s: float, v: float, a: float, dt: float, vmin: float, vmax: float) -> tuple[float, float]:
    """Exact constant-acceleration update with the speed clamped to [vmin, vmax]."""
    if a > 0 and v + a * dt > vmax:
        t_hit = max((vmax - v) / a, 0.0)
        return s + v * t_hit + 0.5 * a * t_hit**2 + vmax * (dt - t_hit), vmax
    if a < 0 and v + a * dt < vmin:
        t_hit = max((vmin - v) / a, 0.0)
        return s + v * t_hit + 0.5 * a * t_hit**2 + vmin * (dt - t_hit), vmin
    return s + v * dt + 0.5 * a * dt * dt, v + a * dt


@lru_cache(maxsize=4096)
def _random_accels(seed: int, count: int) -> tuple[float, ...]:
    gen = np.random.Generator(np.random.Philox(key=seed))
    return tuple(gen.uniform(-UNCERTAIN_ACCEL, UNCERTAIN_ACCEL, size=count).tolist())


def _uncertain_state(o: ObstacleState, t: float) -> tuple[float, float]:
    n_full = int(math.floor(t / UNCERTAIN_PIECE + 1e-12))
    accels = _random_accels(int(o.seed), n_full + 1)
    s, v = o.s0, min(o.v0, UNCERTAIN_VMAX)
    for k in range(n_full):
        s, v = _advance(s, v, accels[k], UNCERTAIN_PIECE, 0.0, UNCERTAIN_VMAX)
    rest = t - n_full * UNCERTAIN_PIECE
    if rest > 0:
        s, v = _advance(s, v, accels[n_full], rest, 0.0, UNCERTAIN_VMAX)
    return s, v


def predict_state(o: ObstacleState, t: float) -> tuple[float, float]:
    """(position, speed) at time ``t``."""
    if t < 0:
        raise NegativeTime(f"t={t} < 0")
    if o.style is Style.NORMAL:
        return o.s0 + o.v0 * t, o.v0
    if o.style is Style.AGGRESSIVE:
        return _advance(o.s0, o.v0, o.a0, t, 0.0, math.inf)
    return _uncertain_state(o, t)


def predict_position(o: ObstacleState, t: float) -> float:
    return predict_state(o, t)[0]


def predict_speed(o: ObstacleState, t: float) -> float:
    return predict_state(o, t)[1]


def predict_track(o: ObstacleState, horizon: float, dt: float, t0: float = 0.0) -> PredictedTrack:
    """Sample the prediction on ``tau = 0, dt, ...`` (absolute time ``t0 + tau``)."""
    if not horizon > 0 or not (0 < dt <= horizon):
        raise InvalidHorizon(f"horizon={horizon}, dt={dt}")
    n = int(math.floor(horizon / dt + 1e-9)) + 1
    tau = np.arange(n) * dt
    states = [predict_state(o, t0 + float(t)) for t in tau]
    l = np.array([s for s, _ in states])
    v = np.array([v for _, v in states])
    return PredictedTrack(tau=tau, l=l, d=np.full(n, o.d0), v=v, dt=dt)


def relative_velocity(o: ObstacleState, ego_v: float, t: float) -> float:
    """Ego speed minus obstacle speed (positive: ego closing from behind)."""
    return ego_v - predict_speed(o, t)
