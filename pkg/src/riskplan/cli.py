"""Command-line entry points.

Exit codes: 0 success, 1 usage or I/O error, 2 no feasible plan, 3 internal
failure.  Each command writes a manifest into its output directory first;
``rerun`` replays a manifest into the same (or another) directory.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baselines import run_comparison, selector_for
from .config import ConfigError, dumps, load_toml, override, to_dict
from .errors import InvalidScenarioFile, NoFeasiblePlan, UnknownMethod, UnknownScenario
from .output import (
    aligned_table, candidates_csv, corridor_csv, diagnostics_csv, file_digest, mark_failed, metrics_csv,
    plan_svg, profiles_svg, read_manifest, selected_csv, simlog_csv, simlog_jsonl, st_svg, write_manifest, write_text,
)
from .planner import PlannerConfig, build_hazard_scene
from .scenario import STOCK, Scenario, load_scenario, stock_path

EXIT_OK, EXIT_USAGE, EXIT_NO_PLAN, EXIT_INTERNAL = 0, 1, 2, 3
USAGE_ERRORS = (UnknownScenario, InvalidScenarioFile, ConfigError, UnknownMethod, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared setup


def _scenario(ref: str, config: Optional[str], cfg_snapshot: Optional[dict] = None) -> Scenario:
    scn = load_scenario(ref)
    cfg = scn.planner
    if config is not None:
        data = load_toml(config)
        cfg = override(cfg, data.get("planner", data))
    if cfg_snapshot is not None:
        cfg = override(PlannerConfig(), cfg_snapshot)
    scn.planner = cfg
    return scn


def _manifest(command: str, args: dict, scn: Scenario) -> dict:
    src = stock_path(args["scenario"]) if args["scenario"] in STOCK else Path(args["scenario"])
    return {
        "command": command,
        "scenario": args["scenario"],
        "scenario_sha256": file_digest(src),
        "config": to_dict(scn.planner),
        "seed": args.get("seed"),
        "args": {k: v for k, v in args.items() if k not in ("scenario", "seed", "out", "config")},
        "output": str(args["out"]),
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_plan(scn: Scenario, seed: int, out: Path, method: str = "SQP", budget: Optional[int] = None) -> int:
    from .sim import initial_state, plan_once

    cfg = scn.planner
    try:
        result, tracked, poses = plan_once(scn, cfg, seed, selector_for(method, budget))
    except NoFeasiblePlan as exc:
        cands = getattr(exc, "candidates", None)
        if cands is not None:
            candidates_csv(out / "candidates.csv", cands)
        diagnostics_csv(out / "diagnostics.csv", exc.diagnostics)
        mark_failed(out, f"no feasible plan: {exc}")
        print(f"no feasible plan: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NO_PLAN
    path = scn.path
    candidates_csv(out / "candidates.csv", result.candidates)
    selected_csv(out / "selected.csv", result.selected, path)
    st = cfg.st
    times = np.round(np.arange(len(result.blocked)) * st.dt, 12)
    corridor_csv(out / "corridor.csv", times, result.blocked, result.corridor)
    hz = build_hazard_scene(scn.ego_l, tracked, scn.road, cfg, path.total_length)
    lo, hi = min(scn.road.boundaries), max(scn.road.boundaries)
    from .hazard import hazard_grid

    grid = hazard_grid(hz, scn.ego_v, (max(scn.ego_l - 20.0, 0.0), min(scn.ego_l + 130.0, path.total_length)),
                       (lo - 1.0, hi + 1.0), 0.5, 0.0)
    grid.to_csv(out / "hazard_grid.csv")
    ego = initial_state(scn)
    dims = {o.state.name: (o.state.length, o.state.width) for o in scn.obstacles}
    obstacles = [(n, x, y, h, *dims[n]) for n, x, y, h in poses]
    plan_svg(out / "plan.svg", path, scn.road, result.candidates, result.selected, (ego.x, ego.y, ego.theta),
             obstacles, (cfg.ego_length, cfg.ego_width))
    l_e, d_e, tau = result.selected.end_state
    print(f"selected l_e={l_e:.3f} d_e={d_e:.3f} tau={tau:.3f} cost={result.selected.cost.total:.6g} "
          f"feasible={result.dropped.get('feasible', 0)}/{len(result.candidates)}")
    return EXIT_OK


def blocked_trace(log, cfg: PlannerConfig) -> list:
    """Per step, the path intervals occupied by laterally conflicting obstacles."""
    out = []
    for rec, frames in zip(log.records, log.obstacle_frames):
        ivs = []
        for _, l_o, d_o, _, length, width in frames:
            gate = 0.5 * (cfg.ego_width + width) + cfg.st.lateral_margin
            if abs(rec.d - d_o) < gate:
                half = 0.5 * (cfg.ego_length + length)
                ivs.append((l_o - half, l_o + half))
        out.append(ivs)
    return out


def cmd_simulate(scn: Scenario, seed: int, out: Path, method: str = "SQP", budget: Optional[int] = None) -> int:
    from .sim import run

    log = run(scn, scn.planner, seed=seed, selector=selector_for(method, budget), method=method.upper())
    simlog_jsonl(out / "simlog.jsonl", log)
    simlog_csv(out / "simlog.csv", log)
    row = {"scenario": scn.name, "method": log.method, "seed": seed, **log.metrics.row()}
    metrics_csv(out / "metrics.csv", [row], ("scenario", "method", "seed"))
    profiles_svg(out / "profiles.svg", log)
    st_svg(out / "st.svg", log.column("t"), blocked_trace(log, scn.planner), log.column("l"),
           log.column("corridor_lo"), log.column("corridor_hi"))
    m = log.metrics
    T = "incomplete" if m.T is None else f"{m.T:.2f}s"
    print(f"{scn.name}: collided={m.collided} T={T} x_a={m.x_a:.4f} y_a={m.y_a:.4f} x_j={m.x_j:.4f} y_j={m.y_j:.4f}")
    return EXIT_OK


def cmd_compare(scn: Scenario, seeds: Sequence[int], out: Path, methods: Sequence[str], budget: Optional[int],
                jobs: int = 1) -> int:
    rows = run_comparison(scn, methods, budget, seeds, scn.planner, jobs)
    lead = ("method", "seed")
    metrics_csv(out / "compare.csv", rows, lead)
    table = aligned_table(rows, list(lead) + ["x_a", "y_a", "x_j", "y_j", "T", "collided"])
    write_text(out / "compare.txt", table)
    print(table, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _methods(text: str) -> list[str]:
    return [m.strip() for m in text.split(",") if m.strip()]


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riskplan", description="Hazard-aware trajectory planning and MPC tracking.")
    p.add_argument("--version", action="version", version=f"riskplan {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, multi_seed=False):
        sp.add_argument("scenario", help=f"stock name ({', '.join(STOCK)}) or a scenario TOML file")
        sp.add_argument("--config", help="TOML file overriding planner settings (see print-config)")
        if multi_seed:
            sp.add_argument("--seeds", type=_seeds, default=[0], help="comma-separated seeds (default 0)")
        else:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=Path, default=None, help="output directory")

    sp = sub.add_parser("plan", help="one planning cycle at t = 0")
    common(sp)
    sp.add_argument("--method", default="SQP", help="SQP (grid), DE, PSO or P_S")
    sp.add_argument("--budget", type=int, default=None, help="evaluations for baseline methods")

    sp = sub.add_parser("simulate", help="closed-loop run")
    common(sp)
    sp.add_argument("--method", default="SQP")
    sp.add_argument("--budget", type=int, default=None)

    sp = sub.add_parser("compare", help="closed-loop runs for several methods")
    common(sp, multi_seed=True)
    sp.add_argument("--methods", type=_methods, default=["SQP", "DE", "PSO", "P_S"])
    sp.add_argument("--budget", type=int, default=None, help="per-replan evaluations (default: grid size)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("print-config", help="print planner settings as TOML")
    sp.add_argument("scenario", nargs="?", default=None)
    sp.add_argument("--config")

    sp = sub.add_parser("rerun", help="replay a manifest")
    sp.add_argument("manifest", type=Path, help="manifest.json or its directory")
    sp.add_argument("--out", type=Path, default=None, help="output directory (default: the manifest's)")
    return p


def _dispatch(command: str, scn: Scenario, a: dict, out: Path) -> int:
    if command == "plan":
        return cmd_plan(scn, a["seed"], out, a.get("method", "SQP"), a.get("budget"))
    if command == "simulate":
        return cmd_simulate(scn, a["seed"], out, a.get("method", "SQP"), a.get("budget"))
    if command == "compare":
        return cmd_compare(scn, a["seeds"], out, a["methods"], a.get("budget"), a.get("jobs", 1))
    raise UsageError(f"unknown command {command!r}")


def _execute(command: str, a: dict, snapshot: Optional[dict] = None) -> int:
    if command != "compare":
        for m in [a.get("method", "SQP")]:
            selector_for(m)
    else:
        for m in a["methods"]:
            selector_for(m)
    scn = _scenario(a["scenario"], a.get("config"), snapshot)
    out = Path(a["out"] if a.get("out") is not None else f"out/{command}_{scn.name}")
    a["out"] = out
    write_manifest(out, _manifest(command, a, scn))
    try:
        return _dispatch(command, scn, a, out)
    except BaseException as exc:
        mark_failed(out, f"{type(exc).__name__}: {exc}")
        raise


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "print-config":
            cfg = _scenario(args.scenario, args.config).planner if args.scenario else PlannerConfig()
            if args.config and not args.scenario:
                data = load_toml(args.config)
                cfg = override(cfg, data.get("planner", data))
            sys.stdout.write(dumps(cfg))
            return EXIT_OK
        if args.command == "rerun":
            try:
                man = read_manifest(args.manifest)
                a = dict(man["args"])
                a.update(scenario=man["scenario"], seed=man["seed"])
                man["command"], man["config"], man["output"]
            except (ValueError, KeyError, TypeError) as exc:
                raise UsageError(f"unreadable manifest {args.manifest}: {exc}") from None
            a["out"] = args.out if args.out is not None else Path(man["output"])
            src = stock_path(man["scenario"]) if man["scenario"] in STOCK else Path(man["scenario"])
            if file_digest(src) != man.get("scenario_sha256"):
                print(f"warning: scenario {man['scenario']} changed since the manifest was written", file=sys.stderr)
            return _execute(man["command"], a, snapshot=man["config"])
        a = vars(args).copy()
        command = a.pop("command")
        return _execute(command, a)
    except NoFeasiblePlan as exc:
        print(f"error: no feasible plan: {exc}", file=sys.stderr)
        return EXIT_NO_PLAN
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # invariant failures and bugs
        traceback.print_exc()
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
