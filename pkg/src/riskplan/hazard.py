"""Dynamic hazard field: static anisotropic Gaussians plus logistic-gated,
velocity-modulated Gaussians around predicted obstacle positions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyRange, TauOutOfHorizon
from .prediction import PredictedTrack


@dataclass(frozen=True)
class StaticHazardSource:
    l_m: float
    d_m: float
    peak: float
    eta_l: float
    eta_d: float

    def __post_init__(self):
        if self.peak < 0 or self.eta_l <= 0 or self.eta_d <= 0:
            raise ValueError("static source needs peak >= 0 and positive spreads")


@dataclass(frozen=True)
class DynamicHazardSource:
    track: PredictedTrack
    peak: float = 5.0
    zeta0: float = 3.0
    k_zeta: float = 0.2
    lambda0: float = 1.0
    k_lambda: float = 0.1
    length: float = 4.5
    beta: float = 1.5

    def __post_init__(self):
        if self.peak < 0 or self.zeta0 <= 0 or self.lambda0 <= 0 or self.beta <= 0:
            raise ValueError("dynamic source needs peak >= 0 and positive zeta0, lambda0, beta")

    def zeta(self, u_rel):
        return self.zeta0 * (1.0 + self.k_zeta * np.abs(u_rel))

    def sensitivity(self, u_rel):
        return self.lambda0 / (1.0 + self.k_lambda * np.abs(u_rel))


@dataclass(frozen=True)
class HazardScene:
    statics: tuple[StaticHazardSource, ...] = ()
    dynamics: tuple[DynamicHazardSource, ...] = ()
    h_max: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "statics", tuple(self.statics))
        object.__setattr__(self, "dynamics", tuple(self.dynamics))
        if not self.h_max > 0:
            raise ValueError("h_max must be positive")
        if self.statics:
            arr = np.array([(s.l_m, s.d_m, s.peak, s.eta_l, s.eta_d) for s in self.statics])
        else:
            arr = np.empty((0, 5))
        object.__setattr__(self, "_static_arr", arr)


def boundary_sources(
    l_start: float, l_end: float, d: float, peak: float = 4.0, spacing: float = 2.0,
    eta_l: float = 2.0, eta_d: float = 0.3,
) -> list[StaticHazardSource]:
    """A row of static sources along a road boundary line."""
    n = int(math.floor((l_end - l_start) / spacing + 1e-9)) + 1
    return [StaticHazardSource(l_start + i * spacing, d, peak, eta_l, eta_d) for i in range(n)]


def static_hazard(scene: HazardScene, l, d):
    l = np.asarray(l, dtype=float)
    d = np.asarray(d, dtype=float)
    arr = scene._static_arr
    if len(arr) == 0:
        return np.zeros(np.broadcast(l, d).shape)[()]
    lm, dm, c, el, ed = (arr[:, i] for i in range(5))
    dl = l[..., None] - lm
    dd = d[..., None] - dm
    expo = -(dl * dl) / (2.0 * el * el) - (dd * dd) / (2.0 * ed * ed)
    return np.sum(c * np.exp(expo), axis=-1)[()]


def _dynamic_term(src: DynamicHazardSource, ego_v, l, d, tau):
    tr = src.track
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < -1e-12) or np.any(tau_arr > tr.horizon + 1e-9):
        raise TauOutOfHorizon(f"tau outside [0, {tr.horizon}]")
    ln, dn, vn = tr.at(tau_arr)
    u_rel = np.asarray(ego_v, dtype=float) - vn
    zeta = src.zeta(u_rel)
    lam = src.sensitivity(u_rel)
    dl = l - ln
    dd = d - dn
    num = src.peak * np.exp(-(dl * dl + dd * dd) / (2.0 * zeta * zeta))
    # logistic gate on signed separation, written to stay finite for large arguments
    z = -lam * (dl - src.beta * src.length)
    gate = np.where(z > 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))), 1.0 / (1.0 + np.exp(-np.abs(z))))
    return num * gate


def dynamic_hazard(scene: HazardScene, ego_v, l, d, tau):
    l = np.asarray(l, dtype=float)
    d = np.asarray(d, dtype=float)
    total = np.zeros(np.broadcast(l, d, np.asarray(tau), np.asarray(ego_v)).shape)
    for src in scene.dynamics:
        total = total + _dynamic_term(src, ego_v, l, d, tau)
    return total[()]


def total_hazard(scene: HazardScene, ego_v, l, d, tau):
    return static_hazard(scene, l, d) + dynamic_hazard(scene, ego_v, l, d, tau)


@dataclass(frozen=True)
class HazardGrid:
    l_centers: np.ndarray
    d_centers: np.ndarray
    values: np.ndarray  # shape (len(d_centers), len(l_centers)); rows are d

    def to_csv(self, path) -> None:
        from .output import format_float

        lines = [",".join(["d\\l"] + [format_float(v) for v in self.l_centers])]
        for d, row in zip(self.d_centers, self.values):
            lines.append(",".join([format_float(d)] + [format_float(v) for v in row]))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _centers(lo: float, hi: float, res: float) -> np.ndarray:
    if not hi > lo:
        raise EmptyRange(f"range ({lo}, {hi}) is empty")
    n = max(int(math.ceil((hi - lo) / res - 1e-9)), 1)
    return lo + (np.arange(n) + 0.5) * res


def hazard_grid(
    scene: HazardScene,
    ego_v: float,
    l_range: Sequence[float],
    d_range: Sequence[float],
    resolution: float,
    tau: float,
) -> HazardGrid:
    if not resolution > 0:
        raise EmptyRange("resolution must be positive")
    lc = _centers(l_range[0], l_range[1], resolution)
    dc = _centers(d_range[0], d_range[1], resolution)
    L, D = np.meshgrid(lc, dc)
    vals = total_hazard(scene, ego_v, L, D, tau)
    return HazardGrid(lc, dc, np.asarray(vals, dtype=float).reshape(len(dc), len(lc)))
