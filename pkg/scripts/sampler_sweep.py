"""Closed-loop sensitivity of comfort metrics to the end-state grid density.

Runs one scenario for several (n_l, n_d, n_tau) grids and prints the
metrics, which shows how much of the planner's jerk comes from the discrete
end-state lattice.

    python3 scripts/sampler_sweep.py overtaking --grids 11x3x4,17x3x4,21x3x4
"""

import argparse

from riskplan.config import override
from riskplan.output import aligned_table
from riskplan.scenario import load_scenario
from riskplan.sim import run


def grid(text):
    return tuple(int(v) for v in text.lower().split("x"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", nargs="?", default="overtaking")
    ap.add_argument("--grids", default="11x3x4,17x3x4,21x3x4,11x5x4")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    scn = load_scenario(args.scenario)
    rows = []
    for g in args.grids.split(","):
        counts = grid(g)
        cfg = override(scn.planner, {"sampler": {"counts": list(counts)}})
        log = run(scn, cfg, seed=args.seed)
        rows.append({"grid": "x".join(map(str, counts)), **log.metrics.row()})
    print(aligned_table(rows, ["grid", "x_a", "y_a", "x_j", "y_j", "T", "collided"]), end="")


if __name__ == "__main__":
    main()
