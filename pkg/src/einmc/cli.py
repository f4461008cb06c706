"""Command line front end.

    einmc env probe --config FILE [--out DIR]
    einmc run SUITE --config FILE [--out DIR] [--seed N] [--threads N] [--no-cache]
    einmc report DIR

Exit codes: 0 on success, 1 when a run or report fails, 2 for usage and
config mistakes.  EINMC_SEED and EINMC_THREADS override the config seed
and the worker count; explicit flags beat both.

Thread count must be fixed before the compiled kernels load, so this
module touches the heavy imports only after arguments are resolved.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="einmc",
        description="Monte Carlo lab for drift response of diffusions "
                    "in random landscapes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    env_cmd = sub.add_parser("env", help="environment utilities")
    env_sub = env_cmd.add_subparsers(dest="env_command", required=True)
    probe = env_sub.add_parser("probe", help="sample the fields of one environment")
    probe.add_argument("--config", required=True)
    probe.add_argument("--out", default="einmc_out")

    run = sub.add_parser("run", help="run one experiment suite")
    run.add_argument("suite")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="einmc_out")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--threads", type=int, default=None)
    run.add_argument("--no-cache", action="store_true")

    report = sub.add_parser("report", help="summarise finished runs in a directory")
    report.add_argument("directory")
    return parser


def _resolve_threads(flag_value) -> int | None:
    if flag_value is not None:
        return flag_value
    raw = os.environ.get("EINMC_THREADS")
    if raw:
        try:
            return int(raw)
        except ValueError:
            raise SystemExit(f"EINMC_THREADS must be an integer, got {raw!r}")
    return None


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise SystemExit(f"thread count must be positive, got {threads}")
    if "numba" not in sys.modules:
        os.environ["NUMBA_NUM_THREADS"] = str(threads)
        return
    import numba

    try:
        numba.set_num_threads(threads)
    except ValueError as exc:
        raise SystemExit(
            f"cannot use {threads} threads in this process: {exc}; "
            "set NUMBA_NUM_THREADS before anything imports numba"
        )


def _resolve_seed(flag_value) -> int | None:
    if flag_value is not None:
        return flag_value
    raw = os.environ.get("EINMC_SEED")
    if raw:
        try:
            return int(raw)
        except ValueError:
            raise SystemExit(f"EINMC_SEED must be an integer, got {raw!r}")
    return None


def _cmd_probe(args) -> int:
    from .environment import build_environment
    from .experiments import ExperimentConfig

    cfg = ExperimentConfig.from_file(args.config)
    env = build_environment(cfg.env)
    import numpy as np

    d = cfg.env.dimension
    span = 3.0 * cfg.env.cell_size
    ts = np.linspace(-span, span, 301)
    pts = np.zeros((len(ts), d))
    pts[:, 0] = ts
    V = env.potential(pts)
    S = env.log_scale(pts)
    drift = np.array([env.drift_at(p) for p in pts])
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "env_probe.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "potential", "log_scale"]
                        + [f"drift_{i}" for i in range(d)])
        for i, t in enumerate(ts):
            writer.writerow([f"{t:.10g}", f"{V[i]:.10g}", f"{S[i]:.10g}"]
                            + [f"{v:.10g}" for v in drift[i]])
    a_vals = np.exp(2.0 * S)
    print(f"environment: {cfg.env.kind} d={d} seed={cfg.env.seed}")
    print(f"potential bound: {np.abs(V).max():.4f} <= {env.v_inf:.4f}")
    print(f"diffusion range along probe: [{a_vals.min():.4f}, {a_vals.max():.4f}]"
          f" inside [{cfg.env.kappa:.4f}, {1 / cfg.env.kappa:.4f}]")
    print(f"dependence range: {cfg.env.dependence_range:.4f}")
    print(f"wrote {path}")
    return 0


def _cmd_run(args) -> int:
    from .experiments import ExperimentConfig, run_suite

    cfg = ExperimentConfig.from_file(args.config)
    seed = _resolve_seed(args.seed)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    rows = run_suite(args.suite, cfg, args.out, use_cache=not args.no_cache)
    cached = rows and all(r.get("cached") for r in rows)
    status = "cached" if cached else "computed"
    print(f"suite {args.suite}: {len(rows)} rows ({status}) -> "
          f"{os.path.join(args.out, args.suite + '.csv')}")
    return 0


def _cmd_report(args) -> int:
    from .experiments import CSV_COLUMNS, SUITES, read_rows, write_rows
    from .svgplot import LinePlot

    directory = args.directory
    if not os.path.isdir(directory):
        print(f"not a directory: {directory}", file=sys.stderr)
        return 2
    all_rows = []
    for suite in SUITES:
        path = os.path.join(directory, f"{suite}.csv")
        if os.path.exists(path):
            all_rows.extend(read_rows(path))
    if not all_rows:
        print(f"no suite results under {directory}", file=sys.stderr)
        return 1
    summary_path = os.path.join(directory, "summary.csv")
    write_rows(summary_path, [{k: r.get(k, "") for k in CSV_COLUMNS}
                              for r in all_rows])
    made_plots = _render_plots(directory, all_rows, LinePlot)
    by_suite: dict[str, int] = {}
    for r in all_rows:
        by_suite[r["suite"]] = by_suite.get(r["suite"], 0) + 1
    for suite, count in sorted(by_suite.items()):
        print(f"{suite:<12} {count} rows")
    print(f"wrote {summary_path}")
    for p in made_plots:
        print(f"wrote {p}")
    return 0


def _named(rows, suite, name):
    picked = [r for r in rows if r["suite"] == suite and r["name"] == name]
    return sorted(picked, key=lambda r: -float(r["lam"])) if all(
        r["lam"] for r in picked) else picked


def _render_plots(directory, rows, LinePlot) -> list:
    written = []
    response = _named(rows, "einstein", "response")
    sigma = _named(rows, "einstein", "sigma_e1")
    if response and sigma:
        lams = [float(r["lam"]) for r in response]
        vals = [float(r["value"]) for r in response]
        errs = [float(r["se"]) if r["se"] else 0.0 for r in response]
        sig = float(sigma[0]["value"])
        plot = LinePlot("normalised drift response vs tilt",
                        "tilt", "response / tilt")
        plot.add(lams, vals, "response / tilt", yerr=errs)
        plot.add([min(lams), max(lams)], [sig, sig],
                 "e1 diffusivity", dashed=True)
        path = os.path.join(directory, "einstein.svg")
        plot.write_to(path)
        written.append(path)
    back = [r for r in rows
            if r["suite"] == "exits" and r["name"] == "backtrack_prob"
            and float(r["value"]) > 0]
    if back:
        plot = LinePlot("backtrack probability", "depth", "probability",
                        logy=True)
        lams = sorted({r["lam"] for r in back}, key=float, reverse=True)
        for lam in lams:
            sub = [r for r in back if r["lam"] == lam]
            depths = [float(r["note"].split("depth=")[1].split(";")[0])
                      for r in sub]
            plot.add(depths, [float(r["value"]) for r in sub], f"tilt {lam}")
        path = os.path.join(directory, "exits.svg")
        plot.write_to(path)
        written.append(path)
    scaled = _named(rows, "regen", "scaled_mean_dtau")
    if scaled:
        plot = LinePlot("renewal cycle length", "tilt",
                        "tilt^2 x mean cycle")
        plot.add([float(r["lam"]) for r in scaled],
                 [float(r["value"]) for r in scaled], "scaled mean",
                 yerr=[float(r["se"]) if r["se"] else 0.0 for r in scaled])
        path = os.path.join(directory, "regen.svg")
        plot.write_to(path)
        written.append(path)
    return written


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "run":
            _apply_threads(_resolve_threads(args.threads))
        elif args.command == "env":
            _apply_threads(_resolve_threads(None))
        from .errors import ConfigError

        try:
            if args.command == "env":
                return _cmd_probe(args)
            if args.command == "run":
                return _cmd_run(args)
            return _cmd_report(args)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        except FileNotFoundError as exc:
            print(f"missing file: {exc}", file=sys.stderr)
            return 2
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 2
        return exc.code if isinstance(exc.code, int) else 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
