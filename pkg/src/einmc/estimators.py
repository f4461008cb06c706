"""Ensemble estimators: diffusivity, drift response, exit and moment tails.

Every routine here averages over both path noise and environment draws.
Environments enter as a base spec reseeded per draw; standard errors always
come from the outermost independent layer (environments when there are two
or more, paths otherwise), so correlated paths inside one landscape never
masquerade as independent samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import EnvironmentSpec, build_environment
from .errors import EstimationError
from .girsanov import reweighted_mean
from .sde import BASE_DT, SimulationConfig, dt_ceiling, simulate_batch
from .stats import Estimate, fit_line, jackknife_mean, wilson_interval


def _env_ids(n_envs: int) -> range:
    if n_envs < 1:
        raise EstimationError(f"n_envs must be at least 1, got {n_envs}")
    return range(n_envs)


def _envs(spec: EnvironmentSpec, n_envs: int):
    """One environment per id; reseeding folds the id into the field key."""
    for k in _env_ids(n_envs):
        yield k, build_environment(spec.with_seed(spec.seed + k))


@dataclass(frozen=True)
class SigmaEstimate:
    """Symmetric diffusivity matrix with error bars on the e1 component."""

    matrix: np.ndarray
    direction: Estimate
    doubling_gap: float
    n_envs: int
    n_paths: int

    @property
    def value(self) -> float:
        return self.direction.value


def estimate_sigma(
    spec: EnvironmentSpec,
    t: float,
    n_paths: int,
    n_envs: int = 1,
    base_seed: int = 0,
    dt: float = BASE_DT,
    time_changed: bool = False,
) -> SigmaEstimate:
    """Effective diffusivity from endpoint second moments at horizon t.

    The estimator is X X^T / t averaged over paths and environments.  A
    checkpoint at t/2 gives a doubling diagnostic: if the process were not
    yet diffusive the two horizons would disagree beyond noise.  The matrix
    must come out positive definite; anything else is a hard error.
    """
    d = spec.dimension
    cfg = SimulationConfig(
        dt=dt, t_max=t, n_paths=n_paths, base_seed=base_seed,
        checkpoint_times=(t / 2, t),
    )
    outer_total = np.zeros((n_envs, d, d))
    half_dir = np.zeros(n_envs)
    dir_sq_total = np.zeros(n_envs)
    dir_sq_sumsq = np.zeros(n_envs)
    for k, env in _envs(spec, n_envs):
        batch = simulate_batch(env, cfg, env_id=k, time_changed=time_changed)
        batch.require_ok()
        ends = batch.endpoint
        outer_total[k] = np.einsum("ni,nj->ij", ends, ends)
        u = batch.dir_displacement**2
        dir_sq_total[k] = u.sum()
        dir_sq_sumsq[k] = (u**2).sum()
        half = batch.cp_positions[:, 0, :] @ batch.direction
        half_dir[k] = (half**2).sum()
    n_total = n_envs * n_paths
    matrix = outer_total.sum(axis=0) / (n_total * cfg.t_final)
    eigvals = np.linalg.eigvalsh(matrix)
    if eigvals.min() <= 0:
        raise EstimationError(
            f"diffusivity estimate is not positive definite (eigenvalues {eigvals})"
        )
    if n_envs >= 2:
        value, se = jackknife_mean(dir_sq_total, np.full(n_envs, n_paths))
        direction = Estimate(
            total=float(value) / cfg.t_final * n_envs, total_sq=float("nan"),
            n=n_envs, se_override=float(se) / cfg.t_final,
            meta={"t": cfg.t_final, "n_paths": n_paths, "n_envs": n_envs},
        )
    else:
        direction = Estimate(
            total=dir_sq_total.sum() / cfg.t_final,
            total_sq=dir_sq_sumsq.sum() / cfg.t_final**2,
            n=n_total,
            meta={"t": cfg.t_final, "n_paths": n_paths, "n_envs": n_envs},
        )
    sigma_half = half_dir.sum() / (n_total * cfg.t_final / 2)
    sigma_full = dir_sq_total.sum() / (n_total * cfg.t_final)
    doubling_gap = abs(sigma_full - sigma_half) / sigma_full
    return SigmaEstimate(
        matrix=matrix,
        direction=direction,
        doubling_gap=float(doubling_gap),
        n_envs=n_envs,
        n_paths=n_paths,
    )


def sigma_oracle_1d(spec: EnvironmentSpec, n_grid: int = 200_001) -> float:
    """Closed-form diffusivity for one-dimensional cell-periodic fields.

    The two-sided averaging formula: the diffusivity is the reciprocal of
    the product of the cell averages of exp(2V)/a and exp(-2V).  Evaluated
    by quadrature over one cell, so it works for any 1-d periodic profile.
    """
    if spec.dimension != 1:
        raise EstimationError("the averaging formula needs a 1-d environment")
    if spec.kind not in ("constant", "periodic-1d"):
        raise EstimationError(f"no closed form for kind {spec.kind!r}")
    env = build_environment(spec)
    xs = np.linspace(0.0, spec.cell_size, n_grid)
    pts = xs[:, None]
    V = env.potential(pts)
    a = np.exp(2.0 * env.log_scale(pts))
    forward = np.trapezoid(np.exp(2.0 * V) / a, xs) / spec.cell_size
    backward = np.trapezoid(np.exp(-2.0 * V), xs) / spec.cell_size
    return float(1.0 / (forward * backward))


def estimate_velocity(
    spec: EnvironmentSpec,
    lam: float,
    t: float,
    n_paths: int,
    n_envs: int = 1,
    base_seed: int = 0,
    dt: float | None = None,
) -> Estimate:
    """Mean speed of the tilted walk at horizon t, averaged over draws."""
    if dt is None:
        dt = min(BASE_DT, dt_ceiling(lam))
    cfg = SimulationConfig(dt=dt, t_max=t, tilt=lam, n_paths=n_paths,
                           base_seed=base_seed)
    totals = np.zeros(n_envs)
    sumsq = np.zeros(n_envs)
    for k, env in _envs(spec, n_envs):
        batch = simulate_batch(env, cfg, env_id=k, perturbed=True).require_ok()
        disp = batch.dir_displacement
        totals[k] = disp.sum()
        sumsq[k] = (disp**2).sum()
    meta = {"lam": lam, "t": cfg.t_final, "n_paths": n_paths, "n_envs": n_envs}
    if n_envs >= 2:
        value, se = jackknife_mean(totals, np.full(n_envs, n_paths))
        return Estimate(
            total=float(value) / cfg.t_final * n_envs, total_sq=float("nan"),
            n=n_envs, se_override=float(se) / cfg.t_final, meta=meta,
        )
    n = n_paths * n_envs
    return Estimate(
        total=totals.sum() / cfg.t_final,
        total_sq=sumsq.sum() / cfg.t_final**2,
        n=n, meta=meta,
    )


def critical_scale_displacement(
    spec: EnvironmentSpec,
    lam: float,
    alpha: float = 1.0,
    n_paths: int = 10_000,
    n_envs: int = 1,
    base_seed: int = 0,
    dt: float | None = None,
) -> dict:
    """Mean displacement at the horizon where tilt^2 * t = alpha, twice.

    Once from directly tilted paths, once by exponential reweighting of
    unperturbed paths.  The two answers share no randomness, and at this
    horizon the weights stay well behaved, so agreement within error bars
    is a sharp consistency check of the whole measure-change machinery.
    """
    t = alpha / lam**2
    if dt is None:
        dt = BASE_DT
    direct_parts, reweighted_parts = [], []
    for k, env in _envs(spec, n_envs):
        cfg = SimulationConfig(dt=dt, t_max=t, tilt=lam, n_paths=n_paths,
                               base_seed=base_seed)
        tilted = simulate_batch(env, cfg, env_id=k, perturbed=True).require_ok()
        direct_parts.append(Estimate.from_samples(tilted.dir_displacement))
        plain_cfg = SimulationConfig(dt=dt, t_max=t, n_paths=n_paths,
                                     base_seed=base_seed + 1)
        plain = simulate_batch(env, plain_cfg, env_id=k)
        reweighted_parts.append(reweighted_mean(plain, lam))
    direct = direct_parts[0]
    reweighted = reweighted_parts[0]
    for e in direct_parts[1:]:
        direct = direct.merge(e)
    for e in reweighted_parts[1:]:
        reweighted = reweighted.merge(e)
    return {
        "t": t,
        "lam": lam,
        "alpha": alpha,
        "direct": direct,
        "reweighted": reweighted,
        "n_eff": sum(p.meta.get("n_eff", 0.0) for p in reweighted_parts),
    }


def backtrack_tail(
    spec: EnvironmentSpec,
    lam: float,
    depths,
    n_paths: int = 2000,
    n_envs: int = 1,
    base_seed: int = 0,
    t_max: float | None = None,
    dt: float | None = None,
) -> dict:
    """Probability that the tilted walk ever falls ``depth`` behind its start.

    Returns Wilson intervals per depth and the slope of log-probability
    against depth over the depths that were actually observed.  The decay
    should be exponential; on the flat landscape the constant is exactly
    2 * lam.
    """
    depths = sorted(float(v) for v in depths)
    if not depths or depths[0] <= 0:
        raise EstimationError("depths must be positive")
    if t_max is None:
        # deep excursions against the drift happen early or not at all; a
        # horizon of many drift times makes the finite-time truncation
        # negligible next to the Wilson widths
        t_max = 40.0 * depths[-1] / lam
    if dt is None:
        dt = BASE_DT
    cfg = SimulationConfig(
        dt=dt, t_max=t_max, tilt=lam, n_paths=n_paths, base_seed=base_seed,
        hit_levels=tuple(-v for v in depths),
    )
    hits = np.zeros(len(depths), dtype=np.int64)
    for k, env in _envs(spec, n_envs):
        batch = simulate_batch(env, cfg, env_id=k, perturbed=True).require_ok()
        hits += np.isfinite(batch.hit_times).sum(axis=0)
    n = n_paths * n_envs
    rows = []
    for depth, k_hits in zip(depths, hits):
        lo, hi = wilson_interval(int(k_hits), n)
        rows.append({
            "depth": depth, "hits": int(k_hits), "n": n,
            "p_hat": k_hits / n, "lo": lo, "hi": hi,
        })
    observed = [(r["depth"], math.log(r["p_hat"])) for r in rows if r["hits"] > 0]
    slope = None
    if len(observed) >= 2:
        xs, ys = zip(*observed)
        slope = fit_line(np.array(xs), np.array(ys)).slope
    return {"lam": lam, "rows": rows, "log_slope": slope, "t_max": t_max}


def forward_exit_tail(
    spec: EnvironmentSpec,
    lam: float,
    level: float,
    times,
    n_paths: int = 2000,
    n_envs: int = 1,
    base_seed: int = 0,
    dt: float | None = None,
) -> dict:
    """Survival P[still short of ``level`` at t] on a grid of times.

    The tilted walk crosses a level of order L / lam in time of order
    L / lam^2; past that the survival decays exponentially in lam^2 t, and
    the fitted log-slope is reported for bound checks.
    """
    times = sorted(float(u) for u in times)
    if not times or times[0] <= 0:
        raise EstimationError("times must be positive")
    if level <= 0:
        raise EstimationError("level must be positive")
    if dt is None:
        dt = BASE_DT
    cfg = SimulationConfig(
        dt=dt, t_max=times[-1], tilt=lam, n_paths=n_paths,
        base_seed=base_seed, hit_levels=(level,),
    )
    n = n_paths * n_envs
    hit_times = np.empty((n,), dtype=np.float64)
    row = 0
    for k, env in _envs(spec, n_envs):
        batch = simulate_batch(env, cfg, env_id=k, perturbed=True).require_ok()
        hit_times[row:row + n_paths] = batch.hit_times[:, 0]
        row += n_paths
    rows = []
    for u in times:
        k_alive = int((~(hit_times <= u)).sum())
        lo, hi = wilson_interval(k_alive, n)
        rows.append({"t": u, "alive": k_alive, "n": n,
                     "p_hat": k_alive / n, "lo": lo, "hi": hi})
    observed = [(r["t"], math.log(r["p_hat"])) for r in rows if r["alive"] > 0]
    slope = None
    if len(observed) >= 2:
        xs, ys = zip(*observed)
        slope = fit_line(np.array(xs), np.array(ys)).slope
    return {"lam": lam, "level": level, "rows": rows, "log_slope": slope}


def moment_ratio_experiment(
    spec: EnvironmentSpec,
    lam: float,
    alphas=(1.0, 2.0, 4.0),
    p: float = 2.0,
    n_paths: int = 2000,
    n_envs: int = 1,
    base_seed: int = 0,
    dt: float | None = None,
) -> dict:
    """Running-maximum moments against the ballistic scale (lam * t)^p.

    One simulation per environment serves every alpha through checkpoints
    at t = alpha / lam^2.  Past the critical scale the ratio should sit
    under a constant that does not grow with alpha or shrink with lam.
    """
    alphas = sorted(float(a) for a in alphas)
    if not alphas or alphas[0] < 1.0:
        raise EstimationError("alphas must be >= 1: below the critical scale "
                              "the ballistic normalisation is meaningless")
    if dt is None:
        dt = BASE_DT
    checkpoints = tuple(a / lam**2 for a in alphas)
    cfg = SimulationConfig(
        dt=dt, t_max=checkpoints[-1], tilt=lam, n_paths=n_paths,
        base_seed=base_seed, checkpoint_times=checkpoints,
    )
    parts = [[] for _ in alphas]
    for k, env in _envs(spec, n_envs):
        batch = simulate_batch(env, cfg, env_id=k, perturbed=True).require_ok()
        for j, a in enumerate(alphas):
            t_j = batch.checkpoint_steps[j] * cfg.dt
            scale = (lam * t_j) ** p
            parts[j].append(Estimate.from_samples(
                batch.cp_max_abs[:, j] ** p / scale))
    out = {}
    for j, a in enumerate(alphas):
        est = parts[j][0]
        for e in parts[j][1:]:
            est = est.merge(e)
        out[a] = est
    return {"lam": lam, "p": p, "ratios": out}
