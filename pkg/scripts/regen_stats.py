"""Regeneration structure of the tilted walk.

Runs the regen suite and prints, per tilt: the renewal-ratio velocity
against the direct one, the scaled mean cycle length tilt^2 x E[dtau]
(which should be roughly tilt-independent), and the round-count tail.

    python3 scripts/regen_stats.py --config configs/quick.cfg
"""
import argparse
import sys

from einmc.experiments import ExperimentConfig, run_suite


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/quick.cfg")
    ap.add_argument("--out", default="runs/regen")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)

    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    rows = run_suite("regen", cfg, args.out)

    by_lam: dict[str, dict] = {}
    for r in rows:
        by_lam.setdefault(r["lam"], {})[r["name"]] = r
    for lam, named in sorted(by_lam.items(), key=lambda kv: -float(kv[0])):
        ratio = named["ratio_velocity"]
        direct = named["direct_velocity"]
        scaled = named["scaled_mean_dtau"]
        print(f"tilt {float(lam):.3g}: ratio velocity "
              f"{float(ratio['value']):.5f} +/- {float(ratio['se']):.5f} "
              f"vs direct {float(direct['value']):.5f}; "
              f"tilt^2 x mean cycle {float(scaled['value']):.3f}")
        tails = [r for r in rows
                 if r["lam"] == lam and r["name"] == "round_tail"]
        for t in tails:
            k = t["note"].split("k=")[1].split(",")[0]
            print(f"    P[rounds >= {k}] observed {float(t['value']):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
