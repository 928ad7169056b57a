"""Exact final variance of each rule on a 1-d N(0, s^2) prior as N grows.

Uses the linear variance recursion, so no sampling noise; writes a CSV to stdout.
"""

import argparse
import csv
import math
import sys

from flowsde.analysis import gaussian_rollout_variance
from flowsde.core import CONSTANT, LOGSNR, ExplorationSchedule, TimeGrid
from flowsde.samplers import Cps, Euler, Precise, Split

RULES = {
    "flow_grpo": (Euler(), ExplorationSchedule(LOGSNR, 0.7)),
    "dance_grpo": (Euler(), ExplorationSchedule(CONSTANT, 0.3)),
    "cps": (Cps(Split.EULER_ENERGY), ExplorationSchedule(LOGSNR, 0.7)),
    "cps_local": (Cps(Split.LOCAL), ExplorationSchedule(LOGSNR, 0.7)),
    "precise": (Precise(), ExplorationSchedule(LOGSNR, 1.5)),
    "precise_sqrt2": (Precise(), ExplorationSchedule(LOGSNR, math.sqrt(2.0))),
    "ddim": (Precise(), ExplorationSchedule(LOGSNR, 0.0)),
}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--prior-std", type=float, default=1.0)
    p.add_argument("--steps", type=int, nargs="*", default=[10, 20, 30, 40, 80, 160, 320, 640, 1280])
    args = p.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["rule", "eta", "N", "final_var", "rel_err"])
    target = args.prior_std**2
    for name, (rule, sch) in RULES.items():
        for n in args.steps:
            v = gaussian_rollout_variance(args.prior_std, TimeGrid.uniform(n), sch, rule)
            w.writerow([name, sch.eta, n, repr(v), repr(v / target - 1.0)])


if __name__ == "__main__":
    main()
