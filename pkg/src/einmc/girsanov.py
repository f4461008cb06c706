"""Exponential reweighting between the unperturbed and tilted path laws.

An unperturbed batch records, per path, the stochastic integral
B = int e1 . sigma(X) dW and its quadratic variation <B> = int |sigma(X) e1|^2 ds.
The density of the tilted chain with drift bump a(X) * lam * e1 against the
plain chain is exp(lam * B - lam^2 / 2 * <B>), exactly, step by step: both
chains share the same Gaussian increments up to a previsible mean shift, so
the likelihood ratio telescopes with no discretisation error.  Reweighted
averages of plain paths therefore estimate tilted expectations, and disagree
with a direct tilted run only through Monte Carlo noise.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import EstimationError
from .sde import PathBatch
from .stats import Estimate

DEFAULT_MIN_EFFECTIVE = 30.0


def _require_plain(batch: PathBatch) -> None:
    if batch.perturbed or batch.time_changed:
        raise EstimationError(
            "reweighting needs an unperturbed, untransformed batch; "
            f"got perturbed={batch.perturbed}, time_changed={batch.time_changed}"
        )


def log_weights(batch: PathBatch, lam: float) -> np.ndarray:
    """Per-path log density of the lam-tilted law against the plain law."""
    _require_plain(batch)
    if not (np.isfinite(lam) and lam >= 0):
        raise EstimationError(f"lam must be finite and non-negative, got {lam}")
    return lam * batch.girsanov_stat - 0.5 * lam**2 * batch.girsanov_bracket


def weights(batch: PathBatch, lam: float) -> np.ndarray:
    return np.exp(log_weights(batch, lam))


def effective_sample_size(w: np.ndarray) -> float:
    """Kish effective sample size (sum w)^2 / sum w^2."""
    s = w.sum()
    s2 = (w**2).sum()
    if s2 == 0.0:
        return 0.0
    return float(s * s / s2)


def reweighted_mean(
    batch: PathBatch,
    lam: float,
    values: np.ndarray | None = None,
    min_effective: float = DEFAULT_MIN_EFFECTIVE,
) -> Estimate:
    """Estimate the tilted-law mean of ``values`` from plain paths.

    The estimator is the plain average of w_i * f_i (the weights integrate
    to one in law, so no self-normalisation is applied; the answer stays
    unbiased).  Raises when the effective sample size falls below
    ``min_effective``, which is the regime where the weight distribution is
    too skewed for the attached standard error to mean anything.
    """
    batch.require_ok()
    w = weights(batch, lam)
    if values is None:
        values = batch.dir_displacement
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != batch.n:
        raise EstimationError(
            f"values has {values.shape[0]} rows for a batch of {batch.n} paths"
        )
    ess = effective_sample_size(w)
    if ess < min_effective:
        raise EstimationError(
            f"effective sample size {ess:.1f} below {min_effective:.1f}; "
            f"tilt lam={lam} is too strong for this horizon, shorten the run "
            "or add paths"
        )
    wf = w * values if values.ndim == 1 else w[:, None] * values
    est = Estimate.from_samples(wf, meta={"lam": lam, "n_eff": ess, "kind": "reweighted"})
    return est


def weight_diagnostics(batch: PathBatch, lam: float) -> dict:
    """Sample moments of the weights next to their exact-law targets.

    The first moment is 1 in law.  The second moment is bounded by
    exp(lam^2 * sup <B>), and the bracket rate never exceeds 1/kappa, so
    exp(lam^2 * t / kappa) is a hard ceiling.
    """
    batch.require_ok()
    w = weights(batch, lam)
    kappa = batch.env.spec.kappa
    t = batch.t_final
    return {
        "mean": Estimate.from_samples(w, meta={"target": 1.0}),
        "second_moment": Estimate.from_samples(w**2),
        "second_moment_bound": math.exp(lam**2 * t / kappa),
        "n_eff": effective_sample_size(w),
        "max_log_weight": float(np.max(log_weights(batch, lam))),
    }


def second_moment_bound(lam: float, t: float, kappa: float) -> float:
    return math.exp(lam**2 * t / kappa)
