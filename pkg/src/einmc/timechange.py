"""Speed change of the diffusion and its inverse-clock equivalence.

The transformed chain Y moves with drift and noise damped by exp(-2V) and
exp(-V); its additive functional A(s) = int_0^s exp(-2 V(Y_u)) du is the
random clock.  Composing Y with the inverse clock reproduces the original
process in law, so the marginal of Y at the clock-crossing of t equals the
marginal of X at t.  That identity is what ``equivalence_test`` checks, and
the long-run clock rate is the constant gamma that also rescales the
effective diffusivity between the two processes.
"""
from __future__ import annotations

import math

import numpy as np

from .environment import Environment
from .errors import ConfigError, SimulationError
from .sde import BASE_DT, PathBatch, SimulationConfig, simulate_batch
from .stats import Estimate, ks_two_sample


def transformed_marginal_batch(
    env: Environment,
    t_star: float,
    n_paths: int,
    base_seed: int,
    dt: float = BASE_DT,
    env_id: int = 0,
    tilt: float = 0.0,
    path_ids=None,
) -> PathBatch:
    """Run the speed-changed chain until its clock crosses ``t_star``.

    The clock rate sits in [exp(-2 max|V|), exp(2 max|V|)] pointwise, so a
    horizon of exp(2 max|V|) * t_star guarantees the crossing for every
    path; any path that still fails to cross is a hard error.  ``path_ids``
    picks the noise streams, as in simulate_batch.
    """
    if t_star <= 0:
        raise ConfigError(f"t_star must be positive, got {t_star}")
    horizon = math.exp(2.0 * env.v_inf) * t_star
    cfg = SimulationConfig(
        dt=dt,
        t_max=horizon + 2 * dt,
        tilt=tilt,
        n_paths=n_paths,
        base_seed=base_seed,
        clock_target=t_star,
    )
    batch = simulate_batch(
        env, cfg, env_id=env_id, perturbed=tilt > 0.0, time_changed=True,
        path_ids=path_ids,
    ).require_ok()
    if not np.all(batch.clock_crossed):
        missing = int((~batch.clock_crossed).sum())
        raise SimulationError(
            f"{missing} speed-changed path(s) never reached clock {t_star}; "
            "the clock-rate band argument failed, which indicates a field bug"
        )
    return batch


def equivalence_samples(
    env: Environment,
    t_star: float,
    n_paths: int,
    base_seed: int,
    dt: float = BASE_DT,
    env_id: int = 0,
    tilt: float = 0.0,
):
    """Paired samples of e1 . X(t_star): direct chain vs inverse-clock chain.

    The two runs use disjoint path id ranges so the samples are independent.
    """
    cfg = SimulationConfig(
        dt=dt, t_max=t_star, tilt=tilt, n_paths=n_paths, base_seed=base_seed
    )
    direct = simulate_batch(
        env, cfg, env_id=env_id, perturbed=tilt > 0.0,
        path_ids=np.arange(n_paths),
    ).require_ok()
    transformed = transformed_marginal_batch(
        env, t_star, n_paths, base_seed, dt=dt, env_id=env_id, tilt=tilt,
        path_ids=np.arange(n_paths, 2 * n_paths),
    )
    x_direct = direct.endpoint @ direct.direction
    x_transformed = transformed.clock_positions @ transformed.direction
    return x_direct, x_transformed


def equivalence_test(
    env: Environment,
    t_star: float,
    n_paths: int,
    base_seed: int,
    dt: float = BASE_DT,
    env_id: int = 0,
    tilt: float = 0.0,
) -> dict:
    """Two-sample KS comparison of the two marginals; large p is agreement."""
    a, b = equivalence_samples(env, t_star, n_paths, base_seed, dt=dt,
                               env_id=env_id, tilt=tilt)
    stat, pvalue = ks_two_sample(a, b)
    return {
        "statistic": stat,
        "pvalue": pvalue,
        "n": n_paths,
        "t_star": t_star,
        "mean_direct": float(a.mean()),
        "mean_transformed": float(b.mean()),
    }


def clock_rate_estimate(batch: PathBatch) -> Estimate:
    """Long-run clock rate gamma from a speed-changed batch.

    Each path contributes A(t) / t, the time average of exp(-2 V(Y)).  The
    speed-changed chain has Lebesgue as invariant measure, so these averages
    converge to the mean of exp(-2V) under the environment law.
    """
    if not batch.time_changed:
        raise ConfigError("clock_rate_estimate needs a time_changed batch")
    batch.require_ok()
    rates = batch.clock / batch.t_final
    return Estimate.from_samples(rates, meta={"t": batch.t_final, "kind": "clock"})


def gamma_spatial(
    env: Environment,
    n_points: int = 200_000,
    seed: int = 0,
    box_cells: float = 200.0,
) -> Estimate:
    """Spatial average of exp(-2V) over a box of ``box_cells`` cells per side.

    Cell parameters are drawn independently per cell, so averaging over many
    cells of one realisation converges to the environment-law mean.
    """
    rng = np.random.default_rng(seed)
    half = 0.5 * box_cells * env.spec.cell_size
    pts = rng.uniform(-half, half, size=(n_points, env.spec.dimension))
    vals = np.exp(-2.0 * env.potential(pts))
    return Estimate.from_samples(vals, meta={"box_cells": box_cells, "kind": "spatial"})


def gamma_oracle_periodic(v: float) -> float:
    """Closed form for the cosine potential: the average of exp(-2 v cos)."""
    from scipy.special import i0

    return float(i0(2.0 * v))
