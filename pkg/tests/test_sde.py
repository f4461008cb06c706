import math

import numpy as np
import pytest

from einmc import EnvironmentSpec, build_environment
from einmc.errors import ConfigError, SimulationError
from einmc.sde import (
    PathBatch,
    SimulationConfig,
    dt_ceiling,
    first_hitting_time,
    simulate_batch,
    simulate_path,
    simulate_time_changed_path,
)

CONST2 = build_environment(EnvironmentSpec.constant(2))
PERIODIC = build_environment(EnvironmentSpec.periodic_1d(0.5, 1.0))
BUMPS = build_environment(
    EnvironmentSpec.random_bumps(2, seed=42, aniso_amplitude=0.15, kappa=0.5)
)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimulationConfig(dt=0.0)
    with pytest.raises(ConfigError):
        SimulationConfig(dt=0.01, tilt=2.0)  # ceiling is 1e-2 / 4
    assert dt_ceiling(2.0) == pytest.approx(0.0025)
    assert dt_ceiling(0.05) == pytest.approx(0.01)
    with pytest.raises(ConfigError):
        SimulationConfig(t_max=0.001, dt=0.01)
    with pytest.raises(ConfigError):
        SimulationConfig(hit_levels=(1.0, 1.0))
    with pytest.raises(ConfigError):
        SimulationConfig(checkpoint_times=(200.0,), t_max=100.0)
    with pytest.raises(ConfigError):
        SimulationConfig(tilt=-0.1)


def test_brownian_moments_unperturbed():
    # constant environment, no tilt: X(t) is exactly Brownian for the Euler
    # chain, so mean 0 and covariance t * I up to Monte Carlo error
    t = 4.0
    n = 10_000
    cfg = SimulationConfig(dt=0.01, t_max=t, n_paths=n, base_seed=11)
    batch = simulate_batch(CONST2, cfg).require_ok()
    mean = batch.endpoint.mean(axis=0)
    se_mean = math.sqrt(t / n)
    assert np.all(np.abs(mean) < 3 * se_mean)
    cov = np.cov(batch.endpoint.T)
    se_var = t * math.sqrt(2.0 / n)
    assert abs(cov[0, 0] - t) < 3 * se_var
    assert abs(cov[1, 1] - t) < 3 * se_var
    assert abs(cov[0, 1]) < 3 * t / math.sqrt(n)


def test_tilted_drift_mean_exact_for_constant_env():
    t, tilt, n = 50.0, 0.2, 4000
    cfg = SimulationConfig(dt=0.01, t_max=t, tilt=tilt, n_paths=n, base_seed=3)
    batch = simulate_batch(CONST2, cfg, perturbed=True).require_ok()
    disp = batch.dir_displacement
    assert abs(disp.mean() - tilt * t) < 3 * math.sqrt(t / n)
    # tilting shifts the mean only; the variance stays t
    assert abs(disp.var() - t) < 4 * t * math.sqrt(2.0 / n)


def test_unperturbed_records_carry_reweighting_statistics():
    cfg = SimulationConfig(dt=0.01, t_max=5.0, n_paths=200, base_seed=1)
    plain = simulate_batch(BUMPS, cfg).require_ok()
    kappa = BUMPS.spec.kappa
    assert np.all(np.isfinite(plain.girsanov_stat))
    assert np.all(plain.girsanov_bracket > 0)
    # bracket bound: integrand |sigma e1|^2 <= 1/kappa pointwise
    assert np.all(plain.girsanov_bracket <= cfg.t_final / kappa + 1e-12)
    tilted = simulate_batch(BUMPS, cfg, perturbed=True).require_ok()
    assert np.all(np.isnan(tilted.girsanov_stat))
    assert np.all(np.isnan(tilted.girsanov_bracket))


def test_clock_band_exact():
    cfg = SimulationConfig(dt=0.01, t_max=20.0, n_paths=300, base_seed=5)
    for env in (PERIODIC, BUMPS):
        lo = math.exp(-2 * env.v_inf) * cfg.t_final
        hi = math.exp(2 * env.v_inf) * cfg.t_final
        for tc in (False, True):
            batch = simulate_batch(env, cfg, time_changed=tc).require_ok()
            assert np.all(batch.clock >= lo - 1e-9)
            assert np.all(batch.clock <= hi + 1e-9)


def test_time_change_is_identity_when_potential_vanishes():
    # V = 0 collapses the time change: same increments, same chain
    cfg = SimulationConfig(dt=0.01, t_max=3.0, n_paths=50, base_seed=9)
    a = simulate_batch(CONST2, cfg)
    b = simulate_batch(CONST2, cfg, time_changed=True)
    assert np.array_equal(a.endpoint, b.endpoint)
    assert np.array_equal(a.clock, b.clock)
    assert np.allclose(a.clock, cfg.t_final)


def test_determinism_and_batch_split_invariance():
    cfg = SimulationConfig(dt=0.01, t_max=2.0, n_paths=40, base_seed=77)
    whole = simulate_batch(BUMPS, cfg, env_id=4)
    again = simulate_batch(BUMPS, cfg, env_id=4)
    assert np.array_equal(whole.endpoint, again.endpoint)
    lo = simulate_batch(BUMPS, cfg, env_id=4, path_ids=np.arange(0, 13))
    hi = simulate_batch(BUMPS, cfg, env_id=4, path_ids=np.arange(13, 40))
    assert np.array_equal(np.vstack([lo.endpoint, hi.endpoint]), whole.endpoint)
    # different env stream changes draws
    other = simulate_batch(BUMPS, cfg, env_id=5)
    assert not np.array_equal(other.endpoint, whole.endpoint)


def test_hitting_time_inverse_gaussian_mean():
    # drifted Brownian motion hits L at an inverse-Gaussian time, mean L / mu.
    # dt is kept well below the ceiling: discrete crossing detection misses
    # sub-step excursions worth ~0.58 sqrt(dt) in the mean.
    tilt, L, n = 1.0, 1.0, 10_000
    cfg = SimulationConfig(
        dt=0.0025, t_max=30.0, tilt=tilt, n_paths=n, base_seed=21, hit_levels=(L,)
    )
    batch = simulate_batch(build_environment(EnvironmentSpec.constant(1)), cfg,
                           perturbed=True).require_ok()
    times = batch.hit_times[:, 0]
    assert np.all(np.isfinite(times))
    mean = times.mean()
    # IG(L/mu, L^2): mean 1, variance L / mu^3 = 1
    assert abs(mean - L / tilt) < 0.05 * (L / tilt)
    assert abs(times.var() - 1.0) < 0.15


def test_ruin_probability_closed_form():
    # P[T_{-L} < inf] = exp(-2 mu L) for unit-variance drift mu > 0
    tilt, L, n = 0.3, 4.0, 4000
    cfg = SimulationConfig(
        dt=0.01, t_max=300.0, tilt=tilt, n_paths=n, base_seed=13, hit_levels=(-L,)
    )
    batch = simulate_batch(build_environment(EnvironmentSpec.constant(1)), cfg,
                           perturbed=True).require_ok()
    hit = np.isfinite(batch.hit_times[:, 0])
    p_hat = hit.mean()
    p_true = math.exp(-2 * tilt * L)
    se = math.sqrt(p_true * (1 - p_true) / n)
    assert abs(p_hat - p_true) < 3.5 * se


def test_hit_levels_bookkeeping():
    cfg = SimulationConfig(dt=0.01, t_max=1.0, n_paths=5, base_seed=2,
                           hit_levels=(0.0, 50.0))
    rec = simulate_batch(CONST2, cfg).record(0)
    assert first_hitting_time(rec, 0.0) == 0.0
    assert first_hitting_time(rec, 50.0) == np.inf
    with pytest.raises(ValueError):
        first_hitting_time(rec, 1.23)


def test_checkpoints_and_trajectory():
    cfg = SimulationConfig(
        dt=0.01, t_max=2.0, n_paths=6, base_seed=31,
        checkpoint_times=(1.0, 2.0), trajectory_stride=50,
    )
    batch = simulate_batch(PERIODIC, cfg).require_ok()
    assert np.array_equal(batch.cp_positions[:, 1, :], batch.endpoint)
    assert np.all(batch.cp_max_abs[:, 0] <= batch.cp_max_abs[:, 1] + 1e-15)
    rec = batch.record(3)
    assert rec.checkpoints.times[0] == pytest.approx(1.0)
    traj = rec.trajectory
    assert traj.positions.shape == (5, 1)
    assert traj.times[1] == pytest.approx(0.5)
    assert np.array_equal(traj.positions[0], np.zeros(1))
    assert np.array_equal(traj.positions[-1], rec.endpoint)
    plain_cfg = SimulationConfig(dt=0.01, t_max=2.0, n_paths=6, base_seed=31)
    ref = simulate_batch(PERIODIC, plain_cfg)
    assert np.array_equal(ref.endpoint, batch.endpoint)


def test_trajectory_stride_must_divide():
    with pytest.raises(ConfigError):
        simulate_batch(CONST2, SimulationConfig(dt=0.01, t_max=1.0, n_paths=2,
                                                trajectory_stride=33))


def test_clock_target_state_matches_checkpoint_when_clock_is_time():
    # constant environment: clock == t, so the clock-crossing state is the
    # state at t_star itself
    t_star = 1.5
    cfg = SimulationConfig(dt=0.01, t_max=3.0, n_paths=20, base_seed=8,
                           clock_target=t_star, checkpoint_times=(t_star,))
    batch = simulate_batch(CONST2, cfg).require_ok()
    assert np.all(batch.clock_crossed)
    assert np.allclose(batch.clock_positions, batch.cp_positions[:, 0, :], atol=1e-12)


def test_time_changed_clock_grows_like_harmonic_mean():
    # periodic-1d: clock rate integrates exp(-2 V(Y)); over long runs the
    # average approaches a fixed constant strictly inside the exact band
    cfg = SimulationConfig(dt=0.01, t_max=500.0, n_paths=64, base_seed=17)
    batch = simulate_batch(PERIODIC, cfg, time_changed=True).require_ok()
    rate = batch.clock / cfg.t_final
    assert rate.std() < 0.05
    assert math.exp(-2 * PERIODIC.v_inf) < rate.mean() < math.exp(2 * PERIODIC.v_inf)


def test_simulate_path_and_time_changed_wrappers():
    cfg = SimulationConfig(dt=0.01, t_max=1.0, n_paths=99, base_seed=4)
    rec = simulate_path(BUMPS, cfg, path_id=7, env_id=2)
    assert rec.path_id == 7 and rec.env_id == 2
    assert rec.ok and not rec.perturbed and not rec.time_changed
    recy = simulate_time_changed_path(BUMPS, cfg, path_id=7, env_id=2)
    assert recy.time_changed
    assert not np.array_equal(rec.endpoint, recy.endpoint)
    batch = simulate_batch(BUMPS, cfg, env_id=2, path_ids=[7])
    assert np.array_equal(batch.endpoint[0], rec.endpoint)


def test_failed_paths_raise_on_require_ok():
    cfg = SimulationConfig(dt=0.01, t_max=1.0, n_paths=3, base_seed=1)
    batch = simulate_batch(CONST2, cfg)
    batch.status[1] = 42  # simulate a non-finite abort
    with pytest.raises(SimulationError, match="path ids 1"):
        batch.require_ok()
    rec = batch.record(1)
    assert not rec.ok and rec.status == 42


def test_weak_exactness_constant_env_under_dt_halving():
    # constant coefficients make the Euler chain exact in law at any dt;
    # the second moment of e1 . X(1) must be 1 at both step sizes
    n = 200_000
    for dt in (0.01, 0.005):
        cfg = SimulationConfig(dt=dt, t_max=1.0, n_paths=n, base_seed=23)
        batch = simulate_batch(build_environment(EnvironmentSpec.constant(1)), cfg)
        m2 = (batch.dir_displacement**2).mean()
        assert abs(m2 - 1.0) < 3 * math.sqrt(2.0 / n)
