"""Grid planner versus the black-box baselines under equal evaluation budgets.

For each seed every method drives the same scenario closed loop; the script
writes one metric row per (method, seed) and prints per-method means and the
per-seed jerk / lateral-acceleration ordering against the grid planner.

    python3 scripts/compare_methods.py overtaking --seeds 0-4 --methods SQP,DE
"""

import argparse
from pathlib import Path

import numpy as np

from riskplan.baselines import run_comparison
from riskplan.output import aligned_table, metrics_csv
from riskplan.scenario import load_scenario


def seed_list(text):
    if "-" in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", nargs="?", default="overtaking")
    ap.add_argument("--seeds", type=seed_list, default=list(range(5)))
    ap.add_argument("--methods", default="SQP,DE,PSO,P_S")
    ap.add_argument("--budget", type=int, default=None, help="per-replan evaluations (default: grid size)")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/compare"))
    args = ap.parse_args()

    scn = load_scenario(args.scenario)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rows = run_comparison(scn, methods, args.budget, args.seeds, scn.planner, args.jobs)
    metrics_csv(args.out / f"{scn.name}.csv", rows, ("method", "seed"))
    cols = ["method", "seed", "x_a", "y_a", "x_j", "y_j", "T", "collided"]
    print(aligned_table(rows, cols), end="")

    print("\nper-method means")
    means = []
    for m in dict.fromkeys(r["method"] for r in rows):
        mine = [r for r in rows if r["method"] == m]
        means.append({"method": m, **{k: float(np.mean([r[k] for r in mine])) for k in ("x_a", "y_a", "x_j", "y_j")},
                      "collisions": sum(bool(r["collided"]) for r in mine)})
    print(aligned_table(means, ["method", "x_a", "y_a", "x_j", "y_j", "collisions"]), end="")

    by = {(r["method"], r["seed"]): r for r in rows}
    if "SQP" in {r["method"] for r in rows}:
        for m in [m for m in dict.fromkeys(r["method"] for r in rows) if m != "SQP"]:
            jerk = sum(by["SQP", s]["x_j"] < by[m, s]["x_j"] for s in args.seeds)
            lat = sum(by["SQP", s]["y_a"] < by[m, s]["y_a"] for s in args.seeds)
            print(f"SQP vs {m}: lower mean |long. jerk| in {jerk}/{len(args.seeds)} seeds, "
                  f"lower mean |lat. accel| in {lat}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
