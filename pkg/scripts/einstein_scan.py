"""Scan the normalised drift response across tilts.

Runs the sigma and einstein suites for one config, prints the response
table and the relative gap to the e1 diffusivity, and leaves CSVs plus
an SVG in the output directory.  The gap should shrink as the tilt does.

    python3 scripts/einstein_scan.py --config configs/quick.cfg --out runs/quick
"""
import argparse
import sys

from einmc.cli import main as cli_main
from einmc.experiments import ExperimentConfig, run_suite


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/quick.cfg")
    ap.add_argument("--out", default="runs/einstein")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--no-cache", action="store_true")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    use_cache = not args.no_cache
    rows = run_suite("sigma", cfg, args.out, use_cache=use_cache)
    rows += run_suite("einstein", cfg, args.out, use_cache=use_cache)

    sigma = next(r for r in rows
                 if r["suite"] == "einstein" and r["name"] == "sigma_e1")
    sig, sig_se = float(sigma["value"]), float(sigma["se"])
    print(f"e1 diffusivity: {sig:.5f} +/- {sig_se:.5f}")
    print(f"{'tilt':>6}  {'response/tilt':>14}  {'rel gap':>9}")
    for r in rows:
        if r["suite"] == "einstein" and r["name"] == "response":
            val, se = float(r["value"]), float(r["se"])
            print(f"{float(r['lam']):>6.3f}  {val:>9.5f} +/- {se:.5f}"
                  f"  {abs(val - sig) / sig:>8.2%}")
    return cli_main(["report", args.out])


if __name__ == "__main__":
    sys.exit(main())
