"""Scenario definitions: road geometry, initial ego and obstacle states, goal.

Stock scenarios live as TOML files under ``riskplan/scenarios``.  Paths are
lists of line and arc segments (or raw waypoints).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .collision import Footprint, overlaps
from .config import ConfigError, load_toml, override
from .errors import InvalidScenarioFile, PlanningError, UnknownScenario
from .frenet import ReferencePath, build_reference
from .planner import PathProjection, PlannerConfig, Road, project_path
from .prediction import ObstacleState, Style

STOCK = ("lane_change", "overtaking", "intersection")


@dataclass(frozen=True)
class GoalStage:
    """Hold ``lane`` until reached (and, if set, until ``margin`` ahead of ``ahead_of``)."""

    lane: float
    ahead_of: str = ""
    margin: float = 10.0


@dataclass(frozen=True)
class Goal:
    stages: tuple[GoalStage, ...]
    exit_l: Optional[float] = None  # path arc length that completes the run
    tolerance: float = 0.2
    settle: float = 1.0  # s simulated after completion

    @property
    def lateral(self) -> bool:
        """Whether the goal is a lateral maneuver (lane change) rather than an exit."""
        return self.exit_l is None


@dataclass(frozen=True)
class ObstacleSpec:
    state: ObstacleState
    waypoints: Optional[np.ndarray] = None  # own path; None follows the ego path


@dataclass
class Scenario:
    name: str
    waypoints: np.ndarray
    road: Road
    ego_l: float
    ego_d: float
    ego_v: float
    obstacles: list[ObstacleSpec]
    v_target: float
    duration: float
    goal: Goal
    planner: PlannerConfig
    description: str = ""
    _path: Optional[ReferencePath] = field(default=None, repr=False)
    _projections: dict = field(default_factory=dict, repr=False)

    @property
    def path(self) -> ReferencePath:
        if self._path is None:
            self._path = build_reference([tuple(p) for p in self.waypoints])
        return self._path

    def obstacle_path(self, i: int) -> Optional[ReferencePath]:
        wp = self.obstacles[i].waypoints
        return None if wp is None else _cached_path(wp)

    def projection(self, i: int) -> Optional[PathProjection]:
        if self.obstacles[i].waypoints is None:
            return None
        if i not in self._projections:
            self._projections[i] = project_path(self.obstacle_path(i), self.path)
        return self._projections[i]

    def with_obstacles(self, obstacles: Sequence[ObstacleSpec]) -> "Scenario":
        return Scenario(
            self.name, self.waypoints, self.road, self.ego_l, self.ego_d, self.ego_v, list(obstacles),
            self.v_target, self.duration, self.goal, self.planner, self.description, self._path,
        )


_PATH_CACHE: dict = {}


def _cached_path(wp: np.ndarray) -> ReferencePath:
    key = wp.tobytes()
    if key not in _PATH_CACHE:
        _PATH_CACHE[key] = build_reference([tuple(p) for p in wp])
    return _PATH_CACHE[key]


def segments_to_waypoints(segments: Sequence[dict]) -> np.ndarray:
    """Expand line/arc segment tables into a waypoint array without duplicates."""
    pts: list[tuple[float, float]] = []
    for seg in segments:
        kind = seg.get("type", "line")
        step = float(seg.get("step", 5.0))
        if kind == "line":
            a, b = np.asarray(seg["from"], float), np.asarray(seg["to"], float)
            n = max(int(math.ceil(np.linalg.norm(b - a) / step)), 1)
            new = [tuple(a + (b - a) * k / n) for k in range(n + 1)]
        elif kind == "arc":
            c = np.asarray(seg["center"], float)
            r = float(seg["radius"])
            a0, a1 = math.radians(seg["start_deg"]), math.radians(seg["end_deg"])
            n = max(int(math.ceil(abs(a1 - a0) * r / step)), 2)
            new = [(c[0] + r * math.cos(a), c[1] + r * math.sin(a)) for a in np.linspace(a0, a1, n + 1)]
        else:
            raise InvalidScenarioFile(f"unknown segment type {kind!r}")
        for p in new:
            if not pts or math.hypot(p[0] - pts[-1][0], p[1] - pts[-1][1]) > 1e-9:
                pts.append((float(p[0]), float(p[1])))
    return np.array(pts)


def _path_from(table: dict, what: str) -> np.ndarray:
    if "waypoints" in table:
        return np.asarray(table["waypoints"], dtype=float)
    if "path" in table:
        return segments_to_waypoints(table["path"])
    raise InvalidScenarioFile(f"{what} needs 'waypoints' or 'path'")


def scenario_from_dict(data: dict, base_cfg: Optional[PlannerConfig] = None) -> Scenario:
    try:
        ego = data["ego"]
        road_t = data.get("road", {})
        road = Road(
            tuple(float(v) for v in road_t.get("lane_centers", (2.0, 6.0))),
            float(road_t.get("lane_width", 4.0)),
            tuple(float(v) for v in road_t.get("boundaries", (0.0, 8.0))),
        )
        obstacles = []
        for i, o in enumerate(data.get("obstacles", [])):
            st = ObstacleState(
                s0=float(o["s0"]), v0=float(o["v0"]), a0=float(o.get("a0", 0.0)), d0=float(o.get("d0", 0.0)),
                length=float(o.get("length", 4.5)), width=float(o.get("width", 1.8)),
                style=Style(o.get("style", "Normal")), seed=int(o.get("seed", i)), name=str(o.get("name", f"sv{i}")),
            )
            wp = _path_from(o, f"obstacle {st.name}") if ("waypoints" in o or "path" in o) else None
            obstacles.append(ObstacleSpec(st, wp))
        g = data.get("goal", {})
        stages = tuple(
            GoalStage(float(s["lane"]), str(s.get("ahead_of", "")), float(s.get("margin", 10.0)))
            for s in g.get("stages", [])
        )
        if not stages:
            # no lane goal: keep the starting lane
            stages = (GoalStage(float(ego.get("d0", road.lane_centers[0])), "", 10.0),)
        goal = Goal(
            stages, None if g.get("exit_l") is None else float(g["exit_l"]),
            float(g.get("tolerance", 0.2)), float(g.get("settle", 1.0)),
        )
        v_target = float(data["v_target"])
        cfg = base_cfg or PlannerConfig()
        cfg = override(cfg, {"weights": {"v_target": v_target}})
        if "planner" in data:
            cfg = override(cfg, data["planner"])
        scn = Scenario(
            name=str(data.get("name", "custom")),
            waypoints=_path_from(ego, "ego"),
            road=road,
            ego_l=float(ego["l0"]),
            ego_d=float(ego.get("d0", road.lane_centers[0])),
            ego_v=float(ego["v0"]),
            obstacles=obstacles,
            v_target=v_target,
            duration=float(data.get("duration", 20.0)),
            goal=goal,
            planner=cfg,
            description=str(data.get("description", "")),
        )
        _check_start(scn)
        return scn
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        if isinstance(exc, PlanningError):
            raise
        raise InvalidScenarioFile(f"invalid scenario: {exc}") from None


def _check_start(scn: Scenario) -> None:
    """Reject scenarios whose obstacles start on top of the ego."""
    path = scn.path
    x, y = path.to_cartesian(scn.ego_l, scn.ego_d)
    ego = Footprint(float(x), float(y), float(path.heading(scn.ego_l)), scn.planner.ego_length, scn.planner.ego_width)
    for i, spec in enumerate(scn.obstacles):
        o = spec.state
        own = scn.obstacle_path(i)
        p, d = (path, o.d0) if own is None else (own, 0.0)
        if not 0.0 <= o.s0 <= p.total_length:
            continue
        ox, oy = p.to_cartesian(o.s0, d)
        if overlaps(ego, Footprint(float(ox), float(oy), float(p.heading(o.s0)), o.length, o.width)):
            raise InvalidScenarioFile(f"obstacle {o.name!r} starts overlapping the ego")


def stock_path(name: str) -> Path:
    return Path(str(resources.files("riskplan") / "scenarios" / f"{name}.toml"))


def load_scenario(ref: str, base_cfg: Optional[PlannerConfig] = None) -> Scenario:
    """Load a stock scenario by name or a scenario TOML file by path."""
    if ref in STOCK:
        p = stock_path(ref)
    else:
        p = Path(ref)
        if p.suffix != ".toml" or not p.exists():
            raise UnknownScenario(f"unknown scenario {ref!r} (stock: {', '.join(STOCK)})")
    try:
        data = load_toml(p)
    except ConfigError as exc:
        raise InvalidScenarioFile(str(exc)) from None
    return scenario_from_dict(data, base_cfg)
