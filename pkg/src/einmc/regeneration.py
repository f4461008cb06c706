"""Regeneration times for tilted paths and the renewal velocity estimate.

A tilted path drifts along e1.  We mark the times where it has climbed a
fresh ladder level, sat still across one coarse-grid block, and then never
backtracks more than one level.  Between such marks the path forgets the
environment it has left behind (levels are spaced beyond the dependence
range), so the marked increments behave like renewal cycles and the ratio
of their mean displacement to their mean duration estimates the speed.

All times live on the coarse grid of spacing 1/lam^2, and the ladder step
is ladder_scale / lam.  The no-backtrack condition is checked over a finite
window of ``no_backtrack_horizon`` grid blocks; marks whose window falls off
the recorded data are censored rather than guessed.

The detector consumes uniformly sampled trajectories.  The grid spacing
must be an integer number of samples so grid times land exactly on sample
indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError, EstimationError, RegenerationError
from .sde import PathBatch
from .stats import Estimate, lag1_autocorr, ratio_with_se


@dataclass(frozen=True)
class RegenerationParams:
    """Tilt strength and detector knobs.

    no_backtrack_horizon is measured in grid blocks of length 1/lam^2;
    max_levels caps the ladder within one construction round before the
    detector gives up and reports a structural problem.
    """

    lam: float
    ladder_scale: float = 2.0
    no_backtrack_horizon: float = 10.0
    max_levels: int = 200

    def __post_init__(self):
        if not (0.0 < self.lam <= 1.0):
            raise ConfigError(f"lam must be in (0, 1], got {self.lam}")
        if self.ladder_scale <= 0:
            raise ConfigError(f"ladder_scale must be positive, got {self.ladder_scale}")
        if self.no_backtrack_horizon < 1.0:
            raise ConfigError(
                "no_backtrack_horizon is in grid blocks and must be >= 1, "
                f"got {self.no_backtrack_horizon}"
            )
        if int(self.max_levels) < 2:
            raise ConfigError(f"max_levels must be at least 2, got {self.max_levels}")

    @property
    def grid_time(self) -> float:
        return self.lam**-2

    @property
    def level_step(self) -> float:
        return self.ladder_scale / self.lam


@dataclass(frozen=True)
class RegenerationSequence:
    """Detected marks for one path: grid times, positions, round counts."""

    params: RegenerationParams
    tau_times: np.ndarray
    tau_positions: np.ndarray
    rounds: np.ndarray
    censored: bool
    violations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n(self) -> int:
        return len(self.tau_times)

    @property
    def first_tau(self) -> float:
        return float(self.tau_times[0]) if self.n else np.nan

    def increments(self):
        """(dx, dtau) between consecutive marks; the stretch before the
        first mark is excluded because it is not a renewal cycle."""
        return np.diff(self.tau_positions), np.diff(self.tau_times)


@numba.njit(cache=True)
def _detect_core(x, g, h_samp, R, max_levels, out_tau, out_k):
    """Scan one sampled path; returns (count, censored, overflowed)."""
    n = x.shape[0]
    last = n - 1
    origin = 0
    count = 0
    cap = out_tau.shape[0]
    half = 0.5 * R
    while count < cap:
        level = x[origin] + 3.0 * R
        search = origin
        k_rounds = 1
        ladder = 0
        while True:
            V = -1
            for i in range(search + 1, n):
                if x[i] >= level:
                    V = i
                    break
            if V < 0:
                return count, True, False
            ladder += 1
            if ladder > max_levels:
                return count, False, True
            N = ((V + g - 1) // g) * g
            if N > last:
                return count, True, False
            still = True
            xv = x[V]
            for i in range(V, N + 1):
                d = x[i] - xv
                if d > half or d < -half:
                    still = False
                    break
            if not still:
                m = x[origin]
                for i in range(origin, N + 1):
                    if x[i] > m:
                        m = x[i]
                level = m + R
                search = N
                continue
            S = N + g
            if S + h_samp > last:
                return count, True, False
            ys = x[S]
            drop = -1
            for i in range(S + 1, S + h_samp + 1):
                if x[i] < ys - R:
                    drop = i
                    break
            if drop < 0:
                out_tau[count] = S
                out_k[count] = k_rounds
                count += 1
                origin = S
                break
            k_rounds += 1
            Rk = ((drop + g - 1) // g) * g
            if Rk > last:
                return count, True, False
            m = x[origin]
            for i in range(origin, Rk + 1):
                if x[i] > m:
                    m = x[i]
            level = m + R
            search = Rk
    return count, False, False


def _grid_samples(times: np.ndarray, params: RegenerationParams) -> int:
    if times.ndim != 1 or len(times) < 3:
        raise ConfigError("need a sampled trajectory with at least three points")
    steps = np.diff(times)
    delta = steps[0]
    if delta <= 0 or not np.allclose(steps, delta, rtol=1e-9, atol=0.0):
        raise ConfigError("trajectory times must be uniformly spaced")
    if abs(times[0]) > 1e-12 * max(delta, 1.0):
        raise ConfigError("trajectory must start at time zero")
    ratio = params.grid_time / delta
    g = int(round(ratio))
    if g < 1 or abs(ratio - g) > 1e-9 * max(ratio, 1.0):
        raise ConfigError(
            f"grid spacing {params.grid_time} is not an integer multiple of the "
            f"sampling interval {delta}; adjust trajectory_stride"
        )
    return g


def detect_regenerations(times, positions, params: RegenerationParams) -> RegenerationSequence:
    """Run the ladder detector on one sampled e1-coordinate path."""
    times = np.asarray(times, dtype=np.float64)
    x = np.ascontiguousarray(positions, dtype=np.float64)
    if x.shape != times.shape:
        raise ConfigError("times and positions must be 1-d arrays of equal length")
    g = _grid_samples(times, params)
    h_samp = int(round(params.no_backtrack_horizon * g))
    cap = len(x) // (2 * g) + 2
    out_tau = np.empty(cap, dtype=np.int64)
    out_k = np.empty(cap, dtype=np.int64)
    count, censored, overflowed = _detect_core(
        x, g, h_samp, params.level_step, int(params.max_levels), out_tau, out_k
    )
    if overflowed:
        raise RegenerationError(
            f"ladder exceeded {params.max_levels} levels without settling; "
            f"the path never pauses for a grid block at lam={params.lam}, "
            "which points at a tilt or sampling mismatch"
        )
    idx = out_tau[:count]
    # a mark is provisional within its window; flag the ones the rest of the
    # recorded path later contradicts
    violations = np.zeros(count, dtype=bool)
    if count:
        suffix_min = np.minimum.accumulate(x[::-1])[::-1]
        for j, s in enumerate(idx):
            if s + 1 <= len(x) - 1:
                violations[j] = suffix_min[s + 1] < x[s] - params.level_step
    return RegenerationSequence(
        params=params,
        tau_times=times[idx].copy(),
        tau_positions=x[idx].copy(),
        rounds=out_k[:count].copy(),
        censored=bool(censored),
        violations=violations,
    )


def choose_discretization(lam: float, dt_target: float,
                          min_samples_per_block: int = 256) -> tuple[float, int]:
    """Step size and trajectory stride that keep the coarse grid exact.

    The grid spacing 1/lam^2 rarely divides a round dt, so the step is
    snapped down to grid / n for an integer n >= grid / dt_target; the
    stride is then the largest divisor of n that still leaves at least
    ``min_samples_per_block`` samples per grid block for the detector.
    """
    if dt_target <= 0:
        raise ConfigError(f"dt_target must be positive, got {dt_target}")
    grid = lam**-2
    n = max(int(math.ceil(grid / dt_target - 1e-9)), 1)
    dt = grid / n
    want = min(min_samples_per_block, n)
    best = n
    for s in range(want, n + 1):
        if n % s == 0:
            best = s
            break
    return dt, n // best

def detect_batch(batch: PathBatch, params: RegenerationParams) -> list[RegenerationSequence]:
    """Detector over every stored trajectory of a batch, projected on e1."""
    if batch.cfg.trajectory_stride <= 0:
        raise ConfigError("batch was simulated without trajectory recording")
    batch.require_ok()
    m = batch.trajectory_positions.shape[1]
    times = np.arange(m) * (batch.cfg.trajectory_stride * batch.cfg.dt)
    proj = batch.trajectory_positions @ batch.direction
    return [detect_regenerations(times, proj[i], params) for i in range(batch.n)]


def ratio_velocity_estimate(sequences, labels=None) -> Estimate:
    """Renewal-ratio speed: mean displacement over mean duration.

    Sequences sharing a label (one environment, say) are pooled into one
    unit before the delta-method error propagation, so the standard error
    reflects variation across independent units only.
    """
    seqs = list(sequences)
    if labels is None:
        labels = list(range(len(seqs)))
    if len(labels) != len(seqs):
        raise EstimationError("labels must match sequences one to one")
    totals: dict = {}
    for lab, seq in zip(labels, seqs):
        dx, dtau = seq.increments()
        if len(dx) == 0:
            continue
        tx, tt, cnt = totals.get(lab, (0.0, 0.0, 0))
        totals[lab] = (tx + dx.sum(), tt + dtau.sum(), cnt + len(dx))
    if len(totals) < 2:
        raise EstimationError(
            "need renewal increments from at least two independent units; "
            "run longer paths or more of them"
        )
    num = np.array([v[0] for v in totals.values()])
    den = np.array([v[1] for v in totals.values()])
    value, se, n_units = ratio_with_se(num, den)
    n_incr = int(sum(v[2] for v in totals.values()))
    return Estimate(
        total=float(value) * n_units,
        total_sq=float("nan"),
        n=n_units,
        meta={"n_increments": n_incr, "kind": "renewal-ratio"},
        se_override=float(se),
    )


def regeneration_statistics(sequences) -> dict:
    """Ensemble summary: cycle moments, round-count tail, first-mark tail.

    The round count K of each mark satisfies P[K = 1] >= 1/2 and
    P[K >= k] <= 2^(1 - k); the observed frequencies are reported next to
    those bounds so callers can assert them with sampling slack.
    """
    seqs = list(sequences)
    if not seqs:
        raise EstimationError("no sequences given")
    lam = seqs[0].params.lam
    grid = seqs[0].params.grid_time
    dx_all, dtau_all, dx_lists = [], [], []
    rounds_all, first_taus = [], []
    n_marks = violations = censored = 0
    for s in seqs:
        dx, dtau = s.increments()
        dx_all.append(dx)
        dtau_all.append(dtau)
        dx_lists.append(dx)
        rounds_all.append(s.rounds)
        n_marks += s.n
        violations += int(s.violations.sum())
        censored += int(s.censored)
        if s.n:
            first_taus.append(s.first_tau)
    dx_all = np.concatenate(dx_all) if dx_all else np.zeros(0)
    dtau_all = np.concatenate(dtau_all) if dtau_all else np.zeros(0)
    rounds_all = np.concatenate(rounds_all) if rounds_all else np.zeros(0, dtype=int)
    out = {
        "lam": lam,
        "n_sequences": len(seqs),
        "n_marks": n_marks,
        "n_increments": len(dtau_all),
        "censored": censored,
        "violations": violations,
        "first_taus": np.asarray(first_taus),
    }
    if len(dtau_all):
        out["mean_dtau"] = Estimate.from_samples(dtau_all)
        out["mean_dx"] = Estimate.from_samples(dx_all)
        out["scaled_mean_dtau"] = out["mean_dtau"].value * lam**2
    if len(rounds_all):
        k = rounds_all
        out["frac_single_round"] = float((k == 1).mean())
        kmax = int(k.max())
        out["round_tail"] = [
            (j, float((k >= j).mean()), 2.0 ** (1 - j)) for j in range(2, kmax + 1)
        ]
    if len(out["first_taus"]) >= 10:
        out["first_tau_grid_mean"] = float(out["first_taus"].mean() / grid)
    rho, rho_se, n_pairs = lag1_autocorr(dx_lists)
    if n_pairs:
        out["dx_lag1_autocorr"] = (rho, rho_se, n_pairs)
    return out
