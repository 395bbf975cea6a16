"""Result files: CSV tables, JSON-lines logs, SVG plots and run manifests.

Floats are written with 17 significant digits and every text file uses LF
line endings, so two identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

MANIFEST = "manifest.json"
FAILED = "FAILED"


def format_float(x) -> str:
    """Round-trip float formatting (17 significant digits)."""
    return f"{float(x):.17g}"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return p


def write_text(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="\n") as fh:
        fh.write(text)
    return p


# ---------------------------------------------------------------------------
# planner outputs

_COST_FIELDS = ("j_s", "j_h", "j_e", "j_c", "j_t", "e_t", "total")


def candidates_csv(path, cands) -> Path:
    header = ["index", "l_e", "d_e", "tau", "feasible", "violation"]
    header += [f"lon_b{k}" for k in range(6)] + [f"lat_b{k}" for k in range(6)] + list(_COST_FIELDS)
    rows = []
    for c in cands:
        cost = [getattr(c.cost, f) if c.cost is not None else None for f in _COST_FIELDS]
        rows.append([c.index, *c.end_state, c.feasible, c.violation or "", *c.lon.b, *c.lat.b, *cost])
    return write_csv(path, header, rows)


def trajectory_samples(c, path, dt: float = 0.1):
    """(t, l, l_dot, l_ddot, d, d_dot, d_ddot, x, y) rows of one candidate."""
    n = max(int(math.ceil(c.duration / dt - 1e-9)), 1)
    t = c.t_i + np.linspace(0.0, c.duration, n + 1)
    l, ld, ldd, d, dd, ddd = c.frenet(t)
    if path is not None:
        x, y = path.to_cartesian(np.clip(l, 0.0, path.total_length), d)
    else:
        x, y = np.full_like(t, np.nan), np.full_like(t, np.nan)
    return np.column_stack([t, l, ld, ldd, d, dd, ddd, np.asarray(x, float), np.asarray(y, float)])


def selected_csv(path, c, ref_path, dt: float = 0.1) -> Path:
    header = ["t", "l", "l_dot", "l_ddot", "d", "d_dot", "d_ddot", "x", "y"]
    return write_csv(path, header, trajectory_samples(c, ref_path, dt).tolist())


def corridor_csv(path, times, blocked, corridor) -> Path:
    from .st_graph import dump_st_csv

    dump_st_csv(path, times, blocked, corridor)
    return Path(path)


def diagnostics_csv(path, diagnostics: dict) -> Path:
    return write_csv(path, ["family", "count"], sorted(diagnostics.items()))


# ---------------------------------------------------------------------------
# simulation outputs

FLAT_COLUMNS = ("t", "x", "y", "theta", "v", "a", "delta", "lane", "hazard")
METRIC_COLUMNS = ("x_a", "y_a", "x_j", "y_j", "T", "collided", "max_curvature", "completed")


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def simlog_jsonl(path, log) -> Path:
    """One JSON object per line: a header, every step, then every event and replan."""
    from dataclasses import asdict

    lines = [json.dumps({"kind": "header", "scenario": log.scenario, "seed": log.seed, "method": log.method,
                         "dt": log.dt}, sort_keys=True)]
    for r in log.records:
        lines.append(json.dumps({"kind": "step", **_jsonable(asdict(r))}, sort_keys=True))
    for e in log.events:
        lines.append(json.dumps({"kind": "event", **_jsonable(e)}, sort_keys=True))
    for p in log.plans:
        lines.append(json.dumps({"kind": "plan", **_jsonable(p)}, sort_keys=True))
    summary = {"kind": "summary", "collided": log.collided, "collision_with": log.collision_with,
               "goal_reached": log.goal_reached, "complete_index": log.complete_index}
    lines.append(json.dumps(_jsonable(summary), sort_keys=True))
    return write_text(path, "\n".join(lines) + "\n")


def simlog_csv(path, log) -> Path:
    rows = [[getattr(r, c) for c in FLAT_COLUMNS] for r in log.records]
    return write_csv(path, FLAT_COLUMNS, rows)


def metrics_csv(path, rows: Sequence[dict], lead: Sequence[str] = ()) -> Path:
    header = list(lead) + list(METRIC_COLUMNS)
    return write_csv(path, header, [[r.get(k) for k in header] for r in rows])


def aligned_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, bool):
            return "yes" if v else "no"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [list(columns)] + [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(s.rjust(w) for s, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG


class Svg:
    """Minimal SVG canvas mapping a data box onto pixels (y up)."""

    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.items: list[str] = []

    def add(self, raw: str) -> None:
        self.items.append(raw)

    def text(self, x: float, y: float, s: str, size: int = 12, anchor: str = "start") -> None:
        s = s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        self.add(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{s}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


class Panel:
    """A plotting area inside an Svg with its own data-to-pixel mapping."""

    def __init__(self, svg: Svg, px: tuple, xlim: tuple, ylim: tuple, equal: bool = False):
        self.svg = svg
        self.x0, self.y0, self.w, self.h = px
        (a, b), (c, d) = _pad(xlim), _pad(ylim)
        if equal:
            sx, sy = self.w / (b - a), self.h / (d - c)
            s = min(sx, sy)
            cx, cy = 0.5 * (a + b), 0.5 * (c + d)
            a, b = cx - 0.5 * self.w / s, cx + 0.5 * self.w / s
            c, d = cy - 0.5 * self.h / s, cy + 0.5 * self.h / s
        self.xlim, self.ylim = (a, b), (c, d)

    def px(self, x, y):
        (a, b), (c, d) = self.xlim, self.ylim
        X = self.x0 + (np.asarray(x, float) - a) / (b - a) * self.w
        Y = self.y0 + self.h - (np.asarray(y, float) - c) / (d - c) * self.h
        return X, Y

    def polyline(self, x, y, stroke="black", width=1.0, dash: Optional[str] = None, opacity: float = 1.0) -> None:
        X, Y = self.px(x, y)
        ok = np.isfinite(X) & np.isfinite(Y)
        if ok.sum() < 2:
            return
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X[ok], Y[ok]))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.svg.add(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}" '
                     f'stroke-opacity="{opacity}"{extra}/>')

    def polygon(self, x, y, fill="gray", opacity: float = 0.5, stroke="none") -> None:
        X, Y = self.px(x, y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X, Y))
        self.svg.add(f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="{stroke}"/>')

    def frame(self, xlabel: str = "", ylabel: str = "", title: str = "") -> None:
        s = self.svg
        s.add(f'<rect x="{self.x0}" y="{self.y0}" width="{self.w}" height="{self.h}" fill="none" stroke="black"/>')
        for v in _ticks(*self.xlim):
            X, _ = self.px(v, self.ylim[0])
            s.add(f'<line x1="{X:.2f}" y1="{self.y0 + self.h}" x2="{X:.2f}" y2="{self.y0 + self.h + 4}" stroke="black"/>')
            s.text(float(X), self.y0 + self.h + 16, f"{v:g}", 10, "middle")
        for v in _ticks(*self.ylim):
            _, Y = self.px(self.xlim[0], v)
            s.add(f'<line x1="{self.x0 - 4}" y1="{Y:.2f}" x2="{self.x0}" y2="{Y:.2f}" stroke="black"/>')
            s.text(self.x0 - 6, float(Y) + 3, f"{v:g}", 10, "end")
        if xlabel:
            s.text(self.x0 + self.w / 2, self.y0 + self.h + 32, xlabel, 12, "middle")
        if ylabel:
            s.add(f'<text x="{self.x0 - 44}" y="{self.y0 + self.h / 2:.2f}" font-size="12" font-family="sans-serif" '
                  f'text-anchor="middle" transform="rotate(-90 {self.x0 - 44} {self.y0 + self.h / 2:.2f})">{ylabel}</text>')
        if title:
            s.text(self.x0 + self.w / 2, self.y0 - 8, title, 13, "middle")


def _pad(lim):
    a, b = float(lim[0]), float(lim[1])
    if not (math.isfinite(a) and math.isfinite(b)):
        return (0.0, 1.0)
    if b - a < 1e-9:
        return (a - 0.5, b + 0.5)
    return (a, b)


def _ticks(a: float, b: float, n: int = 6) -> list[float]:
    raw = (b - a) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=mag)
    first = math.ceil(a / step) * step
    out = []
    v = first
    while v <= b + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def _footprint_xy(x, y, h, length, width):
    c, s = math.cos(h), math.sin(h)
    pts = [(0.5 * length, 0.5 * width), (-0.5 * length, 0.5 * width), (-0.5 * length, -0.5 * width), (0.5 * length, -0.5 * width)]
    return [x + c * a - s * b for a, b in pts], [y + s * a + c * b for a, b in pts]


def plan_svg(path_out, ref_path, road, cands, selected, ego_xy=None, obstacles=(), ego_dims=(4.5, 1.8)) -> Path:
    """Road, all candidates (grey feasible, red infeasible), the selected one in blue."""
    trajs = [(c, trajectory_samples(c, ref_path)) for c in cands]
    sel = trajectory_samples(selected, ref_path)
    xs = np.concatenate([sel[:, 7]] + [t[:, 7] for _, t in trajs])
    ys = np.concatenate([sel[:, 8]] + [t[:, 8] for _, t in trajs])
    l_lo = max(float(np.nanmin(np.concatenate([sel[:, 1]] + [t[:, 1] for _, t in trajs]))) - 20.0, 0.0)
    l_hi = min(float(np.nanmax(np.concatenate([sel[:, 1]] + [t[:, 1] for _, t in trajs]))) + 20.0, ref_path.total_length)
    ls = np.linspace(l_lo, l_hi, 200)
    lines = []
    for d in road.boundaries:
        lines.append((ref_path.to_cartesian(ls, np.full_like(ls, d)), "black", None))
    for d in road.lane_centers:
        lines.append((ref_path.to_cartesian(ls, np.full_like(ls, d)), "#999999", "6,4"))
    allx = np.concatenate([xs] + [np.asarray(p[0]) for p, _, _ in lines])
    ally = np.concatenate([ys] + [np.asarray(p[1]) for p, _, _ in lines])
    svg = Svg(1000, 420)
    pan = Panel(svg, (60, 30, 910, 340), (np.nanmin(allx), np.nanmax(allx)), (np.nanmin(ally), np.nanmax(ally)), equal=True)
    for (x, y), col, dash in lines:
        pan.polyline(x, y, col, 1.2, dash)
    for name, x, y, h, length, width in obstacles:
        fx, fy = _footprint_xy(x, y, h, length, width)
        pan.polygon(fx, fy, "#444444", 0.6)
    if ego_xy is not None:
        fx, fy = _footprint_xy(*ego_xy, *ego_dims)
        pan.polygon(fx, fy, "#1f77b4", 0.6)
    for c, t in trajs:
        pan.polyline(t[:, 7], t[:, 8], "#aaaaaa" if c.feasible else "#e6a0a0", 0.7, opacity=0.8)
    pan.polyline(sel[:, 7], sel[:, 8], "#1f4fb4", 2.5)
    pan.frame("x [m]", "y [m]", "candidate trajectories")
    return write_text(path_out, svg.render())


def profiles_svg(path_out, log) -> Path:
    """Velocity, acceleration and jerk against travelled distance."""
    l = log.column("l")
    v = log.column("v")
    a = log.column("a")
    j = np.zeros_like(a)
    if a.size > 1:
        j[1:] = np.diff(a) / log.dt
    svg = Svg(800, 720)
    for i, (y, lab) in enumerate(((v, "v [m/s]"), (a, "a [m/s^2]"), (j, "jerk [m/s^3]"))):
        pan = Panel(svg, (80, 30 + i * 230, 690, 170), (l.min() if l.size else 0, l.max() if l.size else 1),
                    (y.min() if y.size else 0, y.max() if y.size else 1))
        pan.polyline(l, y, "#1f4fb4", 1.5)
        pan.frame("distance along path [m]" if i == 2 else "", lab)
    return write_text(path_out, svg.render())


def st_svg(path_out, t, blocked: Sequence[Sequence[tuple]], ego_l, corridor_lo=None, corridor_hi=None) -> Path:
    """ST graph: blocked intervals as grey bands, the corridor and the ego trace."""
    t = np.asarray(t, float)
    ego_l = np.asarray(ego_l, float)
    vals = [ego_l]
    for ivs in blocked:
        for lo, hi in ivs:
            vals.append(np.array([lo, hi]))
    allv = np.concatenate(vals) if vals else np.array([0.0, 1.0])
    allv = allv[np.isfinite(allv)]
    svg = Svg(800, 480)
    pan = Panel(svg, (80, 30, 690, 380), (t.min(), t.max()), (allv.min() - 5.0, allv.max() + 5.0))
    dt = float(t[1] - t[0]) if t.size > 1 else 0.1
    for k, ivs in enumerate(blocked):
        for lo, hi in ivs:
            pan.polygon([t[k], t[k] + dt, t[k] + dt, t[k]], [lo, lo, hi, hi], "#888888", 0.5)
    if corridor_lo is not None:
        pan.polyline(t, corridor_lo, "#2ca02c", 1.0, "4,3")
        pan.polyline(t, corridor_hi, "#2ca02c", 1.0, "4,3")
    pan.polyline(t, ego_l, "#1f4fb4", 2.0)
    pan.frame("t [s]", "s [m]", "ST graph")
    return write_text(path_out, svg.render())


# ---------------------------------------------------------------------------
# manifests


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, data: dict) -> Path:
    """Write the directory's single manifest (before any other output)."""
    out.mkdir(parents=True, exist_ok=True)
    for stale in (out / FAILED,):
        if stale.exists():
            stale.unlink()
    return write_text(out / MANIFEST, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST
    with p.open() as fh:
        return json.load(fh)


def mark_failed(out: Path, reason: str) -> Path:
    return write_text(out / FAILED, reason.rstrip("\n") + "\n")
