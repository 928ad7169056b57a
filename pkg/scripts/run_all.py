"""Run every experiment with its config under scripts/configs, one directory per run."""

import argparse
import sys
from pathlib import Path

from flowsde import cli

HERE = Path(__file__).resolve().parent
RUNS = [
    ("identities", "identities.cfg"),
    ("point-mass", "point_mass.cfg"),
    ("gaussian", "gaussian.cfg"),
    ("double-ring", "double_ring.cfg"),
]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip", nargs="*", default=[], help="subcommands to skip, e.g. double-ring")
    args = p.parse_args()
    codes = {}
    for sub, cfg in RUNS:
        if sub in args.skip:
            continue
        print(f"== {sub}", flush=True)
        codes[sub] = cli.main([sub, "--config", str(HERE / "configs" / cfg), "--out", f"{args.out}/{sub}", "--seed", str(args.seed)])
    for sub, code in codes.items():
        print(f"{sub}: exit {code}")
    return max(codes.values(), default=0)


if __name__ == "__main__":
    sys.exit(main())
