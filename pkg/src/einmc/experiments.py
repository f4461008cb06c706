"""Experiment suites: the drift-response scan and its supporting checks.

Each suite turns one ExperimentConfig into a CSV of rows (plus an SVG
under report), caching finished suite results by the content hash of the
config so reruns are free.  The headline ``einstein`` suite tabulates the
normalised drift response ell(lam) / lam against the e1 diffusivity for a
grid of tilts; the remaining suites exercise the pieces that argument
rests on: exponential reweighting, the speed change, exit tails, ballistic
moment bounds and the renewal structure.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .environment import EnvironmentSpec, build_environment
from .configfile import (
    coerce,
    config_digest,
    format_config,
    format_value,
    parse_config_text,
)
from .errors import ConfigError
from .estimators import (
    backtrack_tail,
    critical_scale_displacement,
    estimate_sigma,
    estimate_velocity,
    forward_exit_tail,
    moment_ratio_experiment,
    sigma_oracle_1d,
)
from .girsanov import weight_diagnostics
from .regeneration import (
    RegenerationParams,
    choose_discretization,
    detect_batch,
    ratio_velocity_estimate,
    regeneration_statistics,
)
from .sde import BASE_DT, SimulationConfig, dt_ceiling, simulate_batch
from .stats import fit_line, overlaps
from .timechange import clock_rate_estimate, equivalence_test, gamma_spatial

SUITES = ("sigma", "einstein", "girsanov", "timechange", "exits", "moments", "regen")

_ENV_FIELDS = {
    "kind": str,
    "dimension": int,
    "seed": int,
    "cell_size": float,
    "bump_amplitude": float,
    "aniso_amplitude": float,
    "kappa": float,
    "bumps_per_cell": int,
}

_RUN_FIELDS = {
    "lams": "floats",
    "alpha": float,
    "n_paths": int,
    "n_envs": int,
    "base_seed": int,
    "dt": float,
    "sigma_t": float,
    "regen_blocks": float,
    "ladder_scale": float,
    "no_backtrack_horizon": float,
}

CSV_COLUMNS = ("suite", "name", "lam", "value", "se", "n", "note")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a suite needs: the environment family plus run sizes."""

    env: EnvironmentSpec
    lams: tuple = (0.2, 0.1, 0.05)
    alpha: float = 1.0
    n_paths: int = 1000
    n_envs: int = 1
    base_seed: int = 0
    dt: float = 0.0
    sigma_t: float = 40.0
    regen_blocks: float = 100.0
    ladder_scale: float = 2.0
    no_backtrack_horizon: float = 10.0

    def __post_init__(self):
        for lam in self.lams:
            if not (0.0 < lam <= 1.0):
                raise ConfigError(f"tilts must lie in (0, 1], got {lam}")
        if not self.lams:
            raise ConfigError("run.lams must list at least one tilt")
        if self.n_paths < 1 or self.n_envs < 1:
            raise ConfigError("run.n_paths and run.n_envs must be positive")
        if self.dt < 0:
            raise ConfigError("run.dt cannot be negative; 0 means automatic")
        if self.alpha <= 0 or self.sigma_t <= 0 or self.regen_blocks <= 0:
            raise ConfigError("run.alpha, run.sigma_t, run.regen_blocks must be positive")

    def step_for(self, lam: float) -> float:
        if self.dt > 0:
            return self.dt
        return min(BASE_DT, dt_ceiling(lam))

    def to_mapping(self) -> dict:
        out = {}
        for name in _ENV_FIELDS:
            out[f"env.{name}"] = getattr(self.env, name)
        for name in _RUN_FIELDS:
            out[f"run.{name}"] = getattr(self, name)
        return out

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        env_kwargs, run_kwargs = {}, {}
        for key, value in raw.items():
            if key.startswith("env."):
                name = key[4:]
                if name not in _ENV_FIELDS:
                    raise ConfigError(f"unknown config key {key!r}")
                env_kwargs[name] = coerce(key, value, _ENV_FIELDS[name])
            elif key.startswith("run."):
                name = key[4:]
                if name not in _RUN_FIELDS:
                    raise ConfigError(f"unknown config key {key!r}")
                run_kwargs[name] = coerce(key, value, _RUN_FIELDS[name])
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if "kind" not in env_kwargs or "dimension" not in env_kwargs:
            raise ConfigError("config must set env.kind and env.dimension")
        try:
            env = EnvironmentSpec(**env_kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(env=env, **run_kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_mapping(parse_config_text(fh.read()))

    def text(self) -> str:
        return format_config(self.to_mapping())

    def digest(self, suite: str) -> str:
        return config_digest(self.to_mapping(), extra=suite)

    def with_seed(self, base_seed: int) -> "ExperimentConfig":
        return replace(self, base_seed=base_seed)


# -- result cache ----------------------------------------------------------

def _rows_checksum(rows: list) -> str:
    body = json.dumps(rows, sort_keys=True).encode()
    return hashlib.sha256(body).hexdigest()


def cache_load(cache_dir: str, key: str) -> list | None:
    """Stored rows for a finished suite run, or None.

    The payload carries its own checksum; anything that fails to parse or
    to verify is treated as a miss so a corrupt file costs a recompute,
    never a wrong answer.
    """
    path = os.path.join(cache_dir, key + ".json")
    try:
        with open(path) as fh:
            payload = json.load(fh)
        rows = payload["rows"]
        if payload["checksum"] != _rows_checksum(rows):
            return None
        return rows
    except (OSError, KeyError, ValueError):
        return None


def cache_store(cache_dir: str, key: str, rows: list) -> None:
    os.makedirs(cache_dir, exist_ok=True)
    payload = {"checksum": _rows_checksum(rows), "rows": rows}
    tmp = os.path.join(cache_dir, key + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    os.replace(tmp, os.path.join(cache_dir, key + ".json"))


# -- row plumbing ----------------------------------------------------------

def _row(suite, name, lam, value, se, n, note="") -> dict:
    return {
        "suite": suite, "name": name,
        "lam": "" if lam is None else format_value(float(lam)),
        "value": format_value(float(value)),
        "se": "" if se is None else format_value(float(se)),
        "n": str(int(n)),
        "note": note,
    }


def write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- the suites ------------------------------------------------------------

def _suite_sigma(cfg: ExperimentConfig) -> list:
    rows = []
    dt = cfg.dt if cfg.dt > 0 else BASE_DT
    est = estimate_sigma(cfg.env, t=cfg.sigma_t, n_paths=cfg.n_paths,
                         n_envs=cfg.n_envs, base_seed=cfg.base_seed, dt=dt)
    rows.append(_row("sigma", "sigma_e1", None, est.value,
                     est.direction.std_error, est.direction.n,
                     note=f"doubling_gap={est.doubling_gap:.4f}"))
    d = cfg.env.dimension
    for i in range(d):
        for j in range(i, d):
            rows.append(_row("sigma", f"matrix_{i}{j}", None,
                             est.matrix[i, j], None, cfg.n_paths * cfg.n_envs))
    if cfg.env.dimension == 1 and cfg.env.kind in ("constant", "periodic-1d"):
        oracle = sigma_oracle_1d(cfg.env)
        rows.append(_row("sigma", "sigma_oracle", None, oracle, None, 0,
                         note="cell-average formula"))
        rows.append(_row("sigma", "sigma_rel_gap", None,
                         (est.value - oracle) / oracle, None,
                         est.direction.n))
    return rows


def _suite_einstein(cfg: ExperimentConfig) -> list:
    """Normalised drift response against the diffusivity, per tilt."""
    rows = []
    dt0 = cfg.dt if cfg.dt > 0 else BASE_DT
    sig = estimate_sigma(cfg.env, t=cfg.sigma_t, n_paths=cfg.n_paths,
                         n_envs=cfg.n_envs, base_seed=cfg.base_seed, dt=dt0)
    rows.append(_row("einstein", "sigma_e1", None, sig.value,
                     sig.direction.std_error, sig.direction.n))
    for lam in cfg.lams:
        dt = cfg.step_for(lam)
        t = cfg.alpha / lam**2
        vel = estimate_velocity(cfg.env, lam, t, cfg.n_paths, cfg.n_envs,
                                cfg.base_seed, dt=dt)
        rows.append(_row("einstein", "response", lam, vel.value / lam,
                         vel.std_error / lam, vel.n,
                         note=f"t={t:g}"))
        gap = vel.value / lam - sig.value
        gap_se = math.hypot(vel.std_error / lam, sig.direction.std_error)
        rows.append(_row("einstein", "gap", lam, gap, gap_se, vel.n))
    return rows


def _suite_girsanov(cfg: ExperimentConfig) -> list:
    rows = []
    for lam in cfg.lams:
        dt = cfg.step_for(lam)
        res = critical_scale_displacement(
            cfg.env, lam, alpha=cfg.alpha, n_paths=cfg.n_paths,
            n_envs=cfg.n_envs, base_seed=cfg.base_seed, dt=dt)
        direct, rew = res["direct"], res["reweighted"]
        agree = overlaps(direct, rew)
        rows.append(_row("girsanov", "direct_mean", lam, direct.value,
                         direct.std_error, direct.n, note=f"t={res['t']:g}"))
        rows.append(_row("girsanov", "reweighted_mean", lam, rew.value,
                         rew.std_error, rew.n,
                         note=f"n_eff={res['n_eff']:.0f}"))
        rows.append(_row("girsanov", "ci_overlap", lam, float(agree), None,
                         direct.n))
        env = build_environment(cfg.env)
        plain = simulate_batch(
            env,
            SimulationConfig(dt=dt, t_max=res["t"], n_paths=cfg.n_paths,
                             base_seed=cfg.base_seed + 1),
        )
        diag = weight_diagnostics(plain, lam)
        rows.append(_row("girsanov", "weight_mean", lam, diag["mean"].value,
                         diag["mean"].std_error, diag["mean"].n))
        rows.append(_row(
            "girsanov", "weight_second_moment", lam,
            diag["second_moment"].value, diag["second_moment"].std_error,
            diag["second_moment"].n,
            note=f"bound={diag['second_moment_bound']:.4g}"))
    return rows


def _suite_timechange(cfg: ExperimentConfig) -> list:
    rows = []
    dt = cfg.dt if cfg.dt > 0 else 0.0025
    for rep in range(max(cfg.n_envs, 1)):
        env = build_environment(cfg.env.with_seed(cfg.env.seed + rep))
        res = equivalence_test(env, cfg.sigma_t / 4, cfg.n_paths,
                               cfg.base_seed + rep, dt=dt)
        rows.append(_row("timechange", "ks_pvalue", None, res["pvalue"], None,
                         res["n"], note=f"rep={rep},t={res['t_star']:g}"))
    sig = estimate_sigma(cfg.env, t=cfg.sigma_t, n_paths=cfg.n_paths,
                         n_envs=cfg.n_envs, base_seed=cfg.base_seed, dt=dt)
    sig_y = estimate_sigma(cfg.env, t=cfg.sigma_t, n_paths=cfg.n_paths,
                           n_envs=cfg.n_envs, base_seed=cfg.base_seed + 1,
                           dt=dt, time_changed=True)
    env0 = build_environment(cfg.env)
    long_cfg = SimulationConfig(dt=dt, t_max=cfg.sigma_t, n_paths=cfg.n_paths,
                                base_seed=cfg.base_seed + 2)
    gamma_clock = clock_rate_estimate(
        simulate_batch(env0, long_cfg, time_changed=True).require_ok())
    gamma_space = gamma_spatial(env0, seed=cfg.base_seed)
    rows.append(_row("timechange", "sigma_e1", None, sig.value,
                     sig.direction.std_error, sig.direction.n))
    rows.append(_row("timechange", "sigma_speed_changed", None, sig_y.value,
                     sig_y.direction.std_error, sig_y.direction.n))
    rows.append(_row("timechange", "gamma_clock", None, gamma_clock.value,
                     gamma_clock.std_error, gamma_clock.n))
    rows.append(_row("timechange", "gamma_spatial", None, gamma_space.value,
                     gamma_space.std_error, gamma_space.n))
    ratio = sig_y.value / (gamma_clock.value * sig.value)
    rows.append(_row("timechange", "speed_identity_ratio", None, ratio, None,
                     sig.direction.n, note="sigmaY / (gamma sigma)"))
    return rows


def _suite_exits(cfg: ExperimentConfig) -> list:
    rows = []
    for lam in cfg.lams:
        dt = cfg.step_for(lam)
        depths = tuple(k / lam for k in (1.0, 2.0, 3.0))
        back = backtrack_tail(cfg.env, lam, depths, n_paths=cfg.n_paths,
                              n_envs=cfg.n_envs, base_seed=cfg.base_seed, dt=dt)
        for r in back["rows"]:
            rows.append(_row("exits", "backtrack_prob", lam, r["p_hat"],
                             (r["hi"] - r["lo"]) / 2, r["n"],
                             note=f"depth={r['depth']:g}"))
        if back["log_slope"] is not None:
            rows.append(_row("exits", "backtrack_log_slope", lam,
                             back["log_slope"], None,
                             cfg.n_paths * cfg.n_envs))
        level = 2.0 / lam
        times = tuple(k / lam**2 for k in (2.0, 4.0, 6.0, 8.0))
        fwd = forward_exit_tail(cfg.env, lam, level, times,
                                n_paths=cfg.n_paths, n_envs=cfg.n_envs,
                                base_seed=cfg.base_seed + 1, dt=dt)
        for r in fwd["rows"]:
            rows.append(_row("exits", "slow_crossing_prob", lam, r["p_hat"],
                             (r["hi"] - r["lo"]) / 2, r["n"],
                             note=f"t={r['t']:g},level={level:g}"))
        if fwd["log_slope"] is not None:
            rows.append(_row("exits", "slow_crossing_log_slope", lam,
                             fwd["log_slope"], None, cfg.n_paths * cfg.n_envs))
    return rows


def _suite_moments(cfg: ExperimentConfig) -> list:
    rows = []
    alphas = (cfg.alpha, 2 * cfg.alpha, 4 * cfg.alpha)
    for lam in cfg.lams:
        res = moment_ratio_experiment(cfg.env, lam, alphas=alphas, p=2.0,
                                      n_paths=cfg.n_paths, n_envs=cfg.n_envs,
                                      base_seed=cfg.base_seed,
                                      dt=cfg.step_for(lam))
        for a, est in res["ratios"].items():
            rows.append(_row("moments", "max_moment_ratio", lam, est.value,
                             est.std_error, est.n, note=f"alpha={a:g},p=2"))
    return rows


def _suite_regen(cfg: ExperimentConfig) -> list:
    rows = []
    for lam in cfg.lams:
        dt, stride = choose_discretization(lam, cfg.step_for(lam))
        params = RegenerationParams(
            lam=lam, ladder_scale=cfg.ladder_scale,
            no_backtrack_horizon=cfg.no_backtrack_horizon)
        grid = params.grid_time
        blocks = max(1, round(cfg.regen_blocks))
        sim = SimulationConfig(
            dt=dt, t_max=blocks * grid, tilt=lam,
            n_paths=cfg.n_paths, base_seed=cfg.base_seed,
            trajectory_stride=stride)
        seqs, labels = [], []
        vel_parts = []
        for k in range(cfg.n_envs):
            env = build_environment(cfg.env.with_seed(cfg.env.seed + k))
            batch = simulate_batch(env, sim, env_id=k, perturbed=True)
            batch.require_ok()
            got = detect_batch(batch, params)
            seqs.extend(got)
            labels.extend([k] * len(got))
            disp = batch.dir_displacement
            vel_parts.append((disp.sum(), len(disp)))
        stats = regeneration_statistics(seqs)
        units = labels if cfg.n_envs >= 2 else None
        vel = ratio_velocity_estimate(seqs, labels=units)
        total_disp = sum(p[0] for p in vel_parts)
        total_n = sum(p[1] for p in vel_parts)
        direct_vel = total_disp / (total_n * sim.t_final)
        rows.append(_row("regen", "ratio_velocity", lam, vel.value,
                         vel.std_error, vel.n,
                         note=f"increments={stats['n_increments']}"))
        rows.append(_row("regen", "direct_velocity", lam, direct_vel, None,
                         total_n))
        rows.append(_row("regen", "scaled_mean_dtau", lam,
                         stats["scaled_mean_dtau"],
                         stats["mean_dtau"].std_error * lam**2,
                         stats["n_increments"]))
        rows.append(_row("regen", "frac_single_round", lam,
                         stats["frac_single_round"], None, stats["n_marks"]))
        for k, observed, bound in stats.get("round_tail", []):
            rows.append(_row("regen", "round_tail", lam, observed, None,
                             stats["n_marks"], note=f"k={k},bound={bound:g}"))
        first = stats["first_taus"]
        if len(first) >= 20:
            scaled = np.sort(first) / grid
            qs = np.linspace(0.5, 0.95, 6)
            xs = np.array([np.quantile(scaled, q) for q in qs])
            ys = np.array([math.log(1 - q) for q in qs])
            slope = fit_line(xs, ys).slope
            rows.append(_row("regen", "first_tau_log_slope", lam, slope, None,
                             len(first)))
        rows.append(_row("regen", "violations", lam, stats["violations"],
                         None, stats["n_marks"]))
        rows.append(_row("regen", "censored", lam, stats["censored"], None,
                         stats["n_sequences"]))
    return rows


_SUITE_FNS = {
    "sigma": _suite_sigma,
    "einstein": _suite_einstein,
    "girsanov": _suite_girsanov,
    "timechange": _suite_timechange,
    "exits": _suite_exits,
    "moments": _suite_moments,
    "regen": _suite_regen,
}


def run_suite(suite: str, cfg: ExperimentConfig, out_dir: str,
              use_cache: bool = True) -> list:
    """Run one suite (or reuse its cached rows) and write its CSV."""
    if suite not in _SUITE_FNS:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    os.makedirs(out_dir, exist_ok=True)
    cache_dir = os.path.join(out_dir, "cache")
    key = cfg.digest(suite)
    rows = cache_load(cache_dir, key) if use_cache else None
    cached = rows is not None
    if rows is None:
        rows = _SUITE_FNS[suite](cfg)
        for r in rows:
            r["note"] = (r["note"] + ";" if r["note"] else "") + f"cfg={key[:12]}"
        cache_store(cache_dir, key, rows)
    write_rows(os.path.join(out_dir, f"{suite}.csv"), rows)
    with open(os.path.join(out_dir, f"{suite}.config"), "w") as fh:
        fh.write(cfg.text())
    return [dict(r, cached=cached) for r in rows]
