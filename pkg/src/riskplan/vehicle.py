"""Discrete kinematic bicycle model and its linearization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import SteeringSingular


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w <= -math.pi, w + 2.0 * math.pi, w)
    return w[()] if np.ndim(w) == 0 else w


class VehicleState(NamedTuple):
    x: float
    y: float
    theta: float
    v: float

    def array(self) -> np.ndarray:
        return np.array(self, dtype=float)


class ControlInput(NamedTuple):
    a: float
    delta: float


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    dt: float = 0.1
    delta_max: float = 0.5
    a_max: float = 4.0
    j_max: float = 5.0
    v_bounds: tuple[float, float] = (0.0, 35.0)

    def __post_init__(self):
        if not self.wheelbase > 0 or not self.dt > 0:
            raise ValueError("wheelbase and dt must be positive")
        if not 0 < self.delta_max < math.pi / 2:
            raise ValueError("delta_max must lie in (0, pi/2)")
        if not self.v_bounds[0] < self.v_bounds[1]:
            raise ValueError("v_bounds must be increasing")


def _check_steer(delta: float) -> None:
    if not abs(delta) < math.pi / 2:
        raise SteeringSingular(f"|delta| = {abs(delta):.4g} >= pi/2")


def step_raw(s, u, p: VehicleParams) -> np.ndarray:
    """Forward-Euler update without heading normalization."""
    x, y, th, v = (float(c) for c in s)
    a, delta = (float(c) for c in u)
    _check_steer(delta)
    dt = p.dt
    return np.array([
        x + v * math.cos(th) * dt,
        y + v * math.sin(th) * dt,
        th + v / p.wheelbase * math.tan(delta) * dt,
        v + a * dt,
    ])


def step(s: VehicleState, u: ControlInput, p: VehicleParams) -> VehicleState:
    n = step_raw(s, u, p)
    return VehicleState(float(n[0]), float(n[1]), float(wrap_angle(n[2])), float(n[3]))


def linearize(s_bar, u_bar, p: VehicleParams):
    """Jacobians (A, B) of ``step`` at the nominal point plus the affine residual.

    ``x_next ~= A x + B u + r`` with ``r = step(s_bar, u_bar) - A s_bar - B u_bar``,
    using the unwrapped heading so the model is smooth.
    """
    x, y, th, v = (float(c) for c in s_bar)
    a, delta = (float(c) for c in u_bar)
    _check_steer(delta)
    dt, L = p.dt, p.wheelbase
    c, s, t = math.cos(th), math.sin(th), math.tan(delta)
    A = np.eye(4)
    A[0, 2] = -v * s * dt
    A[0, 3] = c * dt
    A[1, 2] = v * c * dt
    A[1, 3] = s * dt
    A[2, 3] = t / L * dt
    B = np.zeros((4, 2))
    B[2, 1] = v / (L * math.cos(delta) ** 2) * dt
    B[3, 0] = dt
    xb = np.array([x, y, th, v])
    ub = np.array([a, delta])
    r = step_raw(xb, ub, p) - A @ xb - B @ ub
    return A, B, r


def rollout(s0: VehicleState, inputs, p: VehicleParams) -> list[VehicleState]:
    out = [s0]
    for u in inputs:
        out.append(step(out[-1], ControlInput(*u), p))
    return out
