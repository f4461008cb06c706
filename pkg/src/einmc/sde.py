"""Euler-Maruyama engine for the reversible diffusion and its variants.

One kernel integrates every process the package studies:

* plain dynamics      dX = b(X) dt + sigma(X) dW
* tilted dynamics     adds a(X) * tilt * e1 dt            (perturbed=True)
* time-changed        dY = e^{-2V} b dt + e^{-V} sigma dW (time_changed=True),
  whose tilted variant adds e^{-2V} a * tilt * e1 dt

Per step the kernel also accumulates, from the same increments it consumed:

* the reweighting statistic  sum_n sigma(X_n) e1 . sqrt(dt) xi_n  and its
  bracket  sum_n |sigma(X_n) e1|^2 dt  (plain unperturbed runs only),
* the additive clock  sum_n exp(-2 V(state_n)) dt,
* the running max of e1 . X and of |X|,
* first hitting times of registered levels of e1 . X, linearly interpolated
  within the crossing step, +inf when never hit,
* optional checkpoint snapshots, an optional strided trajectory, and the
  optional state at the moment the clock crosses a target value.

Gaussian increments are a pure function of (base_seed, env_id, path_id, step,
component) through the counter-based streams in :mod:`einmc.rng`, so batches
may be split or threaded arbitrarily without changing any draw.

Non-finite states abort the affected path and are reported on its record;
they are never silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numba
import numpy as np

from .environment import Environment, block_low, eval_bumps, fill_block
from .errors import ConfigError, SimulationError
from .rng import normal_pair, path_key

__all__ = [
    "SimulationConfig",
    "PathRecord",
    "PathBatch",
    "Trajectory",
    "Checkpoints",
    "simulate_batch",
    "simulate_path",
    "simulate_time_changed_path",
    "first_hitting_time",
    "dt_ceiling",
]

BASE_DT = 1e-2
_TRAJ_BYTES_LIMIT = 3_000_000_000


def dt_ceiling(tilt: float) -> float:
    """Largest admissible step: min(1e-2, 1e-2 / max(|tilt|, 1)^2)."""
    lam_eff = max(abs(tilt), 1.0)
    return BASE_DT / lam_eff**2


@dataclass(frozen=True)
class SimulationConfig:
    """Run parameters shared by every simulation entry point.

    ``n_paths`` is per environment; ``tilt`` is the strength of the constant
    drift perturbation a(X) * tilt * e1 switched on by ``perturbed=True`` at
    simulation time. ``trajectory_stride`` (in steps) keeps every k-th state;
    ``checkpoint_times`` snapshot the accumulators mid-run; ``clock_target``
    records the state when the additive clock crosses the given value.
    """

    dt: float = BASE_DT
    t_max: float = 100.0
    tilt: float = 0.0
    n_paths: int = 1000
    n_envs: int = 1
    base_seed: int = 0
    direction: tuple[float, ...] | None = None
    hit_levels: tuple[float, ...] = ()
    trajectory_stride: int = 0
    checkpoint_times: tuple[float, ...] = ()
    clock_target: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be positive and finite, got {self.dt!r}")
        ceiling = dt_ceiling(self.tilt)
        if self.dt > ceiling * (1 + 1e-12):
            raise ConfigError(
                f"dt = {self.dt} exceeds the step ceiling {ceiling:.3g} for tilt = {self.tilt}"
            )
        if not (math.isfinite(self.t_max) and self.t_max >= self.dt):
            raise ConfigError(f"t_max must be >= dt, got {self.t_max!r}")
        if self.tilt < 0 or not math.isfinite(self.tilt):
            raise ConfigError(f"tilt must be >= 0 and finite, got {self.tilt!r}")
        if self.n_paths < 1 or self.n_envs < 1:
            raise ConfigError("n_paths and n_envs must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")
        if self.trajectory_stride < 0:
            raise ConfigError("trajectory_stride must be >= 0")
        levels = tuple(float(v) for v in self.hit_levels)
        if len(set(levels)) != len(levels):
            raise ConfigError("hit_levels must be distinct")
        for v in levels:
            if not math.isfinite(v):
                raise ConfigError("hit_levels must be finite")
        object.__setattr__(self, "hit_levels", levels)
        cps = tuple(float(v) for v in self.checkpoint_times)
        if any(not (0 < v <= self.t_max + 1e-9) for v in cps):
            raise ConfigError("checkpoint_times must lie in (0, t_max]")
        if list(cps) != sorted(set(cps)):
            raise ConfigError("checkpoint_times must be strictly increasing")
        object.__setattr__(self, "checkpoint_times", cps)
        if self.clock_target < 0 or not math.isfinite(self.clock_target):
            raise ConfigError("clock_target must be >= 0 and finite")
        if self.direction is not None:
            vec = np.asarray(self.direction, dtype=float)
            if vec.ndim != 1 or not np.all(np.isfinite(vec)) or np.linalg.norm(vec) == 0:
                raise ConfigError("direction must be a finite nonzero vector")
            object.__setattr__(self, "direction", tuple(float(v) for v in vec))

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_max / self.dt)))

    @property
    def t_final(self) -> float:
        """Integrated horizon: n_steps * dt (may differ from t_max by rounding)."""
        return self.n_steps * self.dt

    def unit_direction(self, dimension: int) -> np.ndarray:
        if self.direction is None:
            e1 = np.zeros(dimension)
            e1[0] = 1.0
            return e1
        vec = np.asarray(self.direction, dtype=float)
        if vec.shape != (dimension,):
            raise ConfigError(
                f"direction has dimension {vec.shape[0]}, environment has {dimension}"
            )
        return vec / np.linalg.norm(vec)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # (m,)
    positions: np.ndarray  # (m, d)


@dataclass(frozen=True)
class Checkpoints:
    times: np.ndarray  # (k,)
    positions: np.ndarray  # (k, d)
    max_abs: np.ndarray
    dir_running_max: np.ndarray
    girsanov_stat: np.ndarray
    girsanov_bracket: np.ndarray
    clock: np.ndarray


@dataclass(frozen=True)
class PathRecord:
    """Everything retained about one simulated path.

    ``clock`` integrates exp(-2 V) along whatever process was simulated; it is
    the time-change clock when ``time_changed`` and a plain diagnostic
    otherwise. ``girsanov_stat``/``girsanov_bracket`` are NaN unless the run
    was plain and unperturbed. ``status`` is -1 for a clean run, else the step
    index at which the state became non-finite.
    """

    endpoint: np.ndarray
    t_final: float
    tilt: float
    perturbed: bool
    time_changed: bool
    env_id: int
    path_id: int
    dir_running_max: float
    max_abs: float
    girsanov_stat: float
    girsanov_bracket: float
    clock: float
    hitting: dict[float, float]
    status: int = -1
    checkpoints: Checkpoints | None = None
    trajectory: Trajectory | None = None
    clock_state: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status < 0


class PathBatch:
    """Structure-of-arrays result of one simulate_batch call."""

    def __init__(self, env: Environment, cfg: SimulationConfig, env_id, path_ids,
                 perturbed, time_changed, arrays):
        self.env = env
        self.cfg = cfg
        self.env_id = int(env_id)
        self.path_ids = path_ids
        self.perturbed = perturbed
        self.time_changed = time_changed
        for name, value in arrays.items():
            setattr(self, name, value)
        self.t_final = cfg.t_final

    @property
    def n(self) -> int:
        return len(self.path_ids)

    @property
    def dir_displacement(self) -> np.ndarray:
        """e1 . X(t_final) per path."""
        return self.endpoint @ self.direction

    def require_ok(self):
        bad = np.flatnonzero(self.status >= 0)
        if bad.size:
            ids = ", ".join(str(self.path_ids[i]) for i in bad[:8])
            raise SimulationError(
                f"{bad.size} path(s) hit non-finite states (env {self.env_id}, "
                f"path ids {ids}{'...' if bad.size > 8 else ''}); "
                f"first failure at step {int(self.status[bad[0]])}"
            )
        return self

    def record(self, i: int) -> PathRecord:
        cfg = self.cfg
        cps = None
        if len(cfg.checkpoint_times) > 0:
            cps = Checkpoints(
                times=self.checkpoint_steps * cfg.dt,
                positions=self.cp_positions[i],
                max_abs=self.cp_max_abs[i],
                dir_running_max=self.cp_dir_max[i],
                girsanov_stat=self.cp_girsanov_stat[i],
                girsanov_bracket=self.cp_girsanov_bracket[i],
                clock=self.cp_clock[i],
            )
        traj = None
        if cfg.trajectory_stride > 0:
            m = self.trajectory_positions.shape[1]
            times = np.arange(m) * (cfg.trajectory_stride * cfg.dt)
            traj = Trajectory(times=times, positions=self.trajectory_positions[i])
        clock_state = None
        if cfg.clock_target > 0 and self.clock_crossed[i]:
            clock_state = self.clock_positions[i].copy()
        return PathRecord(
            endpoint=self.endpoint[i].copy(),
            t_final=self.t_final,
            tilt=cfg.tilt,
            perturbed=self.perturbed,
            time_changed=self.time_changed,
            env_id=self.env_id,
            path_id=int(self.path_ids[i]),
            dir_running_max=float(self.dir_max[i]),
            max_abs=float(self.max_abs[i]),
            girsanov_stat=float(self.girsanov_stat[i]),
            girsanov_bracket=float(self.girsanov_bracket[i]),
            clock=float(self.clock[i]),
            hitting={lv: float(self.hit_times[i, j]) for j, lv in enumerate(cfg.hit_levels)},
            status=int(self.status[i]),
            checkpoints=cps,
            trajectory=traj,
            clock_state=clock_state,
        )

    def records(self) -> Iterator[PathRecord]:
        return (self.record(i) for i in range(self.n))


@numba.njit(cache=True, parallel=True)
def _run_batch(kind, dim, field_key, rho, inv_rb2, v_unit, s_unit, v_inf, nb, off,
               keys, dt, n_steps, tilt, e1, perturbed, time_changed,
               levels, cp_steps, stride, clock_target,
               endpoint, max_abs, dir_max, gstat, gbracket, clock,
               hit_times, cp_positions, cp_max_abs, cp_dir_max, cp_gstat,
               cp_gbracket, cp_clock, traj, clock_positions, clock_crossed,
               status):
    n = keys.shape[0]
    pairs = (dim + 1) // 2
    sqdt = np.sqrt(dt)
    nl = levels.shape[0]
    ncp = cp_steps.shape[0]
    freq = 2.0 * np.pi / rho
    accumulate_girsanov = (not perturbed) and (not time_changed)
    for p in numba.prange(n):
        key = keys[p]
        x = np.zeros(dim)
        xprev = np.zeros(dim)
        xi = np.zeros(dim)
        gv = np.zeros(dim)
        gs = np.zeros(dim)
        nrows = (1 << dim) * nb
        centers = np.empty((nrows, dim))
        vamps = np.empty(nrows)
        samps = np.empty(nrows)
        low = np.empty(dim, np.int64)
        cur = np.empty(dim, np.int64)
        have_block = False
        y = 0.0
        ymax = 0.0
        r2max = 0.0
        B = 0.0
        br = 0.0
        A = 0.0
        cp_i = 0
        ti = 1
        for j in range(nl):
            hit_times[p, j] = np.inf if levels[j] != 0.0 else 0.0
        if stride > 0:
            for t in range(dim):
                traj[p, 0, t] = 0.0
        clock_crossed[p] = False
        status[p] = -1
        for step in range(n_steps):
            for j in range(pairs):
                g1, g2 = normal_pair(key, np.uint64(step * pairs + j))
                xi[2 * j] = g1
                if 2 * j + 1 < dim:
                    xi[2 * j + 1] = g2
            yprev = y
            for t in range(dim):
                xprev[t] = x[t]
            if kind == 0:
                w2 = 1.0
                if accumulate_girsanov:
                    dot = 0.0
                    for t in range(dim):
                        dot += e1[t] * xi[t]
                    B += sqdt * dot
                    br += dt
                for t in range(dim):
                    inc = sqdt * xi[t]
                    if perturbed:
                        inc += tilt * e1[t] * dt
                    x[t] += inc
            else:
                if kind == 1:
                    V = v_inf * np.cos(freq * x[0])
                    gv[0] = -v_inf * freq * np.sin(freq * x[0])
                    S = 0.0
                    gs[0] = 0.0
                else:
                    block_low(x, rho, off, low)
                    same = have_block
                    if have_block:
                        for t in range(dim):
                            if low[t] != cur[t]:
                                same = False
                                break
                    if not same:
                        fill_block(field_key, low, dim, nb, rho, v_unit, s_unit,
                                   off, centers, vamps, samps)
                        for t in range(dim):
                            cur[t] = low[t]
                        have_block = True
                    V, S = eval_bumps(x, centers, vamps, samps, inv_rb2, gv, gs)
                c = np.exp(S)
                a_sc = c * c
                w2 = np.exp(-2.0 * V)
                if time_changed:
                    pref = w2
                    noise = np.exp(-V) * c
                else:
                    pref = 1.0
                    noise = c
                if accumulate_girsanov:
                    dot = 0.0
                    for t in range(dim):
                        dot += e1[t] * xi[t]
                    B += c * sqdt * dot
                    br += a_sc * dt
                for t in range(dim):
                    bt = a_sc * (gs[t] - gv[t])
                    if perturbed:
                        bt += a_sc * tilt * e1[t]
                    x[t] += pref * bt * dt + noise * sqdt * xi[t]
            A += w2 * dt
            y = 0.0
            finite = True
            r2 = 0.0
            for t in range(dim):
                y += e1[t] * x[t]
                r2 += x[t] * x[t]
                if not np.isfinite(x[t]):
                    finite = False
            if not finite:
                status[p] = step
                break
            if y > ymax:
                ymax = y
            if r2 > r2max:
                r2max = r2
            for j in range(nl):
                if hit_times[p, j] == np.inf:
                    lv = levels[j]
                    if (lv > 0.0 and y >= lv) or (lv < 0.0 and y <= lv):
                        frac = (lv - yprev) / (y - yprev)
                        hit_times[p, j] = (step + frac) * dt
            if clock_target > 0.0 and not clock_crossed[p] and A >= clock_target:
                a_prev = A - w2 * dt
                frac = (clock_target - a_prev) / (A - a_prev)
                for t in range(dim):
                    clock_positions[p, t] = xprev[t] + frac * (x[t] - xprev[t])
                clock_crossed[p] = True
            done = step + 1
            if cp_i < ncp and cp_steps[cp_i] == done:
                for t in range(dim):
                    cp_positions[p, cp_i, t] = x[t]
                cp_max_abs[p, cp_i] = np.sqrt(r2max)
                cp_dir_max[p, cp_i] = ymax
                cp_gstat[p, cp_i] = B
                cp_gbracket[p, cp_i] = br
                cp_clock[p, cp_i] = A
                cp_i += 1
            if stride > 0 and done % stride == 0:
                for t in range(dim):
                    traj[p, ti, t] = x[t]
                ti += 1
        for t in range(dim):
            endpoint[p, t] = x[t]
        max_abs[p] = np.sqrt(r2max)
        dir_max[p] = ymax
        gstat[p] = B
        gbracket[p] = br
        clock[p] = A


def simulate_batch(env: Environment, cfg: SimulationConfig, *, env_id: int = 0,
                   perturbed: bool = False, time_changed: bool = False,
                   path_ids=None) -> PathBatch:
    """Integrate cfg.n_paths paths (or the given path_ids) in one environment."""
    dim = env.dimension
    e1 = cfg.unit_direction(dim)
    if path_ids is None:
        path_ids = np.arange(cfg.n_paths, dtype=np.int64)
    else:
        path_ids = np.asarray(path_ids, dtype=np.int64)
        if path_ids.ndim != 1 or path_ids.size == 0:
            raise ConfigError("path_ids must be a non-empty 1-d sequence")
    n = path_ids.size
    n_steps = cfg.n_steps
    stride = int(cfg.trajectory_stride)
    if stride > 0:
        if n_steps % stride != 0:
            raise ConfigError(
                f"trajectory_stride {stride} must divide n_steps {n_steps}"
            )
        m = n_steps // stride + 1
        need = n * m * dim * 8
        if need > _TRAJ_BYTES_LIMIT:
            raise ConfigError(
                f"trajectory storage would take {need / 1e9:.1f} GB; "
                "raise the stride or lower n_paths"
            )
        traj = np.empty((n, m, dim))
    else:
        traj = np.empty((1, 1, 1))
    cp_steps = np.array([int(round(v / cfg.dt)) for v in cfg.checkpoint_times],
                        dtype=np.int64)
    if cp_steps.size:
        if np.any(cp_steps < 1) or np.any(cp_steps > n_steps):
            raise ConfigError("checkpoint_times do not land on integration steps")
        if np.any(np.diff(cp_steps) <= 0):
            raise ConfigError("checkpoint_times collide after rounding to steps")
    ncp = cp_steps.size
    keys = np.empty(n, dtype=np.uint64)
    for i, pid in enumerate(path_ids):
        keys[i] = path_key(np.uint64(cfg.base_seed), np.uint64(env_id), np.uint64(pid))
    levels = np.asarray(cfg.hit_levels, dtype=np.float64)

    arrays = dict(
        endpoint=np.zeros((n, dim)),
        max_abs=np.zeros(n),
        dir_max=np.zeros(n),
        girsanov_stat=np.zeros(n),
        girsanov_bracket=np.zeros(n),
        clock=np.zeros(n),
        hit_times=np.full((n, max(levels.size, 1)), np.inf),
        cp_positions=np.zeros((n, ncp, dim)),
        cp_max_abs=np.zeros((n, ncp)),
        cp_dir_max=np.zeros((n, ncp)),
        cp_girsanov_stat=np.zeros((n, ncp)),
        cp_girsanov_bracket=np.zeros((n, ncp)),
        cp_clock=np.zeros((n, ncp)),
        clock_positions=np.zeros((n, dim)),
        clock_crossed=np.zeros(n, dtype=np.bool_),
        status=np.full(n, -1, dtype=np.int64),
    )
    _run_batch(*env.kernel_args, keys, cfg.dt, n_steps, cfg.tilt, e1,
               perturbed, time_changed, levels, cp_steps, stride,
               cfg.clock_target,
               arrays["endpoint"], arrays["max_abs"], arrays["dir_max"],
               arrays["girsanov_stat"], arrays["girsanov_bracket"],
               arrays["clock"], arrays["hit_times"], arrays["cp_positions"],
               arrays["cp_max_abs"], arrays["cp_dir_max"],
               arrays["cp_girsanov_stat"], arrays["cp_girsanov_bracket"],
               arrays["cp_clock"], traj, arrays["clock_positions"],
               arrays["clock_crossed"], arrays["status"])
    arrays["hit_times"] = arrays["hit_times"][:, :levels.size]
    if perturbed or time_changed:
        arrays["girsanov_stat"] = np.full(n, np.nan)
        arrays["girsanov_bracket"] = np.full(n, np.nan)
        arrays["cp_girsanov_stat"] = np.full((n, ncp), np.nan)
        arrays["cp_girsanov_bracket"] = np.full((n, ncp), np.nan)
    if stride > 0:
        arrays["trajectory_positions"] = traj
    arrays["checkpoint_steps"] = cp_steps
    arrays["direction"] = e1
    batch = PathBatch(env, cfg, env_id, path_ids, perturbed, time_changed, arrays)
    return batch


def simulate_path(env: Environment, cfg: SimulationConfig, *, path_id: int = 0,
                  env_id: int = 0, perturbed: bool = False) -> PathRecord:
    return simulate_batch(env, cfg, env_id=env_id, perturbed=perturbed,
                          path_ids=[path_id]).record(0)


def simulate_time_changed_path(env: Environment, cfg: SimulationConfig, *,
                               path_id: int = 0, env_id: int = 0,
                               perturbed: bool = False) -> PathRecord:
    return simulate_batch(env, cfg, env_id=env_id, perturbed=perturbed,
                          time_changed=True, path_ids=[path_id]).record(0)


def first_hitting_time(record: PathRecord, level: float) -> float:
    """Hitting time of e1 . X = level, +inf if not reached within the horizon."""
    key = float(level)
    if key not in record.hitting:
        raise ValueError(
            f"level {level!r} was not registered in SimulationConfig.hit_levels"
        )
    return record.hitting[key]
