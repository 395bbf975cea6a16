"""Oriented-rectangle overlap by the separating-axis test.

Rectangles are closed sets: touching edges or corners count as contact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Footprint:
    x: float
    y: float
    heading: float
    length: float
    width: float

    def axes(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, s], [-s, c]])

    def corners(self) -> np.ndarray:
        u, v = self.axes()
        hl, hw = 0.5 * self.length, 0.5 * self.width
        ctr = np.array([self.x, self.y])
        return np.array([ctr + hl * u + hw * v, ctr - hl * u + hw * v, ctr - hl * u - hw * v, ctr + hl * u - hw * v])


def _radius(f: Footprint, axis: np.ndarray) -> float:
    u, v = f.axes()
    return 0.5 * f.length * abs(u @ axis) + 0.5 * f.width * abs(v @ axis)


def overlaps(a: Footprint, b: Footprint, tol: float = 1e-12) -> bool:
    """True when the closed rectangles share at least one point."""
    d = np.array([b.x - a.x, b.y - a.y])
    for axis in np.vstack([a.axes(), b.axes()]):
        if abs(d @ axis) > _radius(a, axis) + _radius(b, axis) + tol:
            return False
    return True


def detect_collision(ego: Footprint, others: Sequence[Footprint]) -> tuple[bool, Optional[int]]:
    """(collided, index of the first overlapping footprint)."""
    for i, o in enumerate(others):
        if overlaps(ego, o):
            return True, i
    return False, None
