"""Exit-time tails of the tilted walk.

Runs the exits suite: backtrack probabilities at a few depths (these
should decay like exp(-2 tilt depth) on flat landscapes) and survival
probabilities short of a forward level.  Prints the fitted log slopes.

    python3 scripts/exit_tails.py --config configs/quick.cfg
"""
import argparse
import sys

from einmc.experiments import ExperimentConfig, run_suite


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/quick.cfg")
    ap.add_argument("--out", default="runs/exits")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)

    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    rows = run_suite("exits", cfg, args.out)

    for r in rows:
        if r["name"] == "backtrack_prob":
            depth = r["note"].split("depth=")[1].split(";")[0]
            print(f"tilt {float(r['lam']):.3g}: depth {float(depth):g}: "
                  f"P[backtrack] = {float(r['value']):.5f}")
    for r in rows:
        if r["name"] in ("backtrack_log_slope", "slow_crossing_log_slope"):
            print(f"tilt {float(r['lam']):.3g}: {r['name']} = "
                  f"{float(r['value']):+.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
