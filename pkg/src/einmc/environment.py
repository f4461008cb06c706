"""Stationary random environments with finite dependence range.

An environment is a pair of smooth bounded fields on R^d:

* a scalar potential V with ``|V| <= bump_amplitude``, and
* an isotropic diffusion matrix ``sigma = exp(s) I`` built from a second
  field s with ``|s| <= aniso_amplitude``.

From these the package derives ``a = sigma sigma^T = exp(2s) I`` and the
reversible drift ``b = 1/2 div a - a grad V = exp(2s) (grad s - grad V)``.

The ``random-bumps`` kind tiles space with cells of side ``cell_size`` and
drops ``bumps_per_cell`` compactly supported C^2 bumps into each cell. Bump
centers and amplitudes are pure functions of (seed, cell coordinates, bump
index) through a counter-based hash, so the field is lazy, deterministic, and
identical no matter in which order points are queried. Supports have radius
``cell_size / 2``; fields at points whose supporting cell blocks are disjoint
are independent by construction. Per-bump amplitudes are pre-divided by the
maximal overlap count (2^d cells x bumps_per_cell), which makes the stated
sup-norm budgets exact rather than approximate.

Two fixture kinds are provided for oracle work: ``constant`` (V = 0,
sigma = I) and ``periodic-1d`` (V = bump_amplitude * cos(2 pi x / cell_size),
sigma = 1), the latter having a closed-form effective diffusivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .rng import fold, uniform

__all__ = [
    "EnvironmentSpec",
    "Environment",
    "build_environment",
    "drift_at",
    "KIND_CODES",
]

KIND_CODES = {"constant": 0, "periodic-1d": 1, "random-bumps": 2}

_SALT_OFFSET = np.uint64(0x6F66667365740001)
_SALT_FIELD = np.uint64(0x6669656C64730002)


@dataclass(frozen=True)
class EnvironmentSpec:
    """Parameters defining one environment family.

    ``seed`` selects the realization; all other fields are structural.
    ``bump_amplitude`` is the sup-norm budget for V, ``aniso_amplitude`` the
    budget for s = log of the scalar diffusion factor, and ``kappa`` the
    ellipticity floor the realized ``a`` must respect:
    kappa |y|^2 <= y . a y <= kappa^{-1} |y|^2.
    """

    kind: str
    dimension: int
    seed: int = 0
    cell_size: float = 1.0
    bump_amplitude: float = 0.5
    aniso_amplitude: float = 0.0
    kappa: float = 1.0
    bumps_per_cell: int = 3

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise ValueError(f"dimension must be an integer >= 1, got {self.dimension!r}")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValueError(f"cell_size must be positive and finite, got {self.cell_size!r}")
        if not (0 < self.kappa <= 1):
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa!r}")
        if not (math.isfinite(self.bump_amplitude) and self.bump_amplitude >= 0):
            raise ValueError(f"bump_amplitude must be finite and >= 0, got {self.bump_amplitude!r}")
        if not (math.isfinite(self.aniso_amplitude) and self.aniso_amplitude >= 0):
            raise ValueError(f"aniso_amplitude must be finite and >= 0, got {self.aniso_amplitude!r}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.kind == "random-bumps":
            if self.bumps_per_cell < 1:
                raise ValueError("bumps_per_cell must be >= 1")
            # exp(2 |s|_inf) <= kappa^{-1/2} keeps a = exp(2s) strictly inside
            # [kappa, 1/kappa] with a factor-of-two margin in the exponent.
            limit = -math.log(self.kappa) / 4.0
            if self.aniso_amplitude > limit + 1e-12:
                raise ValueError(
                    f"aniso_amplitude {self.aniso_amplitude} violates ellipticity: "
                    f"need exp(2 s_max) <= kappa^(-1/2), i.e. s_max <= {limit:.6g} "
                    f"for kappa = {self.kappa}"
                )
        else:
            if self.aniso_amplitude != 0:
                raise ValueError(f"{self.kind} environments require aniso_amplitude = 0")
            if self.kind == "periodic-1d" and self.dimension != 1:
                raise ValueError("periodic-1d requires dimension = 1")

    @property
    def dependence_range(self) -> float:
        """Nominal dependence range of the field pair (2 cells)."""
        return 2.0 * self.cell_size

    @property
    def potential_bound(self) -> float:
        """Exact bound on |V|."""
        return 0.0 if self.kind == "constant" else self.bump_amplitude

    def with_seed(self, seed: int) -> "EnvironmentSpec":
        return replace(self, seed=seed)

    @classmethod
    def constant(cls, dimension: int, seed: int = 0) -> "EnvironmentSpec":
        return cls(kind="constant", dimension=dimension, seed=seed, bump_amplitude=0.0)

    @classmethod
    def periodic_1d(cls, amplitude: float = 0.5, cell_size: float = 1.0, seed: int = 0) -> "EnvironmentSpec":
        return cls(
            kind="periodic-1d",
            dimension=1,
            seed=seed,
            cell_size=cell_size,
            bump_amplitude=amplitude,
        )

    @classmethod
    def random_bumps(
        cls,
        dimension: int,
        seed: int,
        cell_size: float = 1.0,
        bump_amplitude: float = 0.5,
        aniso_amplitude: float = 0.1,
        kappa: float = 0.5,
        bumps_per_cell: int = 3,
    ) -> "EnvironmentSpec":
        return cls(
            kind="random-bumps",
            dimension=dimension,
            seed=seed,
            cell_size=cell_size,
            bump_amplitude=bump_amplitude,
            aniso_amplitude=aniso_amplitude,
            kappa=kappa,
            bumps_per_cell=bumps_per_cell,
        )


# ---------------------------------------------------------------------------
# numba field kernels, shared with the SDE engine
# ---------------------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def block_low(x, rho, off, low):
    """Lower cell index, per axis, of the 2^d cell block whose bumps can reach x."""
    for t in range(x.shape[0]):
        low[t] = np.int64(np.floor((x[t] - off[t]) / rho - 0.5))


@numba.njit(cache=True)
def fill_block(field_key, low, dim, nb, rho, v_unit, s_unit, off, centers, vamps, samps):
    """Generate bump parameters for the 2^d cells with lower corner ``low``.

    Row layout: cell m (bit t of m selects low[t] or low[t]+1) occupies rows
    [m * nb, (m + 1) * nb). Centers are absolute coordinates.
    """
    ncells = 1 << dim
    for m in range(ncells):
        key = field_key
        for t in range(dim):
            c = low[t] + ((m >> t) & 1)
            key = fold(key, np.uint64(c))
        for j in range(nb):
            base = np.uint64(j * (dim + 2))
            row = m * nb + j
            for t in range(dim):
                c = low[t] + ((m >> t) & 1)
                u = uniform(key, base + np.uint64(t))
                centers[row, t] = (c + u) * rho + off[t]
            vamps[row] = (2.0 * uniform(key, base + np.uint64(dim)) - 1.0) * v_unit
            samps[row] = (2.0 * uniform(key, base + np.uint64(dim + 1)) - 1.0) * s_unit


@numba.njit(cache=True, inline="always")
def eval_bumps(x, centers, vamps, samps, inv_rb2, gv, gs):
    """Sum bump contributions at x. Returns (V, s); writes gradients in place.

    Bump profile: q(u) = (1 - u)^3 with u = |x - c|^2 / rb^2, supported on
    u < 1. q, q', q'' all vanish at the support edge, so the summed field
    is C^2 everywhere.
    """
    V = 0.0
    S = 0.0
    for t in range(gv.shape[0]):
        gv[t] = 0.0
        gs[t] = 0.0
    for r in range(centers.shape[0]):
        r2 = 0.0
        for t in range(x.shape[0]):
            dxt = x[t] - centers[r, t]
            r2 += dxt * dxt
        u = r2 * inv_rb2
        if u < 1.0:
            w = 1.0 - u
            w2 = w * w
            V += vamps[r] * w2 * w
            S += samps[r] * w2 * w
            cv = -6.0 * vamps[r] * w2 * inv_rb2
            cs = -6.0 * samps[r] * w2 * inv_rb2
            for t in range(x.shape[0]):
                dxt = x[t] - centers[r, t]
                gv[t] += cv * dxt
                gs[t] += cs * dxt
    return V, S


@numba.njit(cache=True)
def eval_fields(kind, dim, field_key, rho, inv_rb2, v_unit, s_unit, v_inf, nb, off, X):
    """Evaluate (V, grad V, s, grad s) at each row of X (n, d)."""
    n = X.shape[0]
    V = np.zeros(n)
    S = np.zeros(n)
    GV = np.zeros((n, dim))
    GS = np.zeros((n, dim))
    if kind == 0:
        return V, GV, S, GS
    if kind == 1:
        freq = 2.0 * np.pi / rho
        for i in range(n):
            V[i] = v_inf * np.cos(freq * X[i, 0])
            GV[i, 0] = -v_inf * freq * np.sin(freq * X[i, 0])
        return V, GV, S, GS
    nrows = (1 << dim) * nb
    centers = np.empty((nrows, dim))
    vamps = np.empty(nrows)
    samps = np.empty(nrows)
    low = np.empty(dim, np.int64)
    cur = np.empty(dim, np.int64)
    have = False
    for i in range(n):
        x = X[i]
        block_low(x, rho, off, low)
        same = have
        if have:
            for t in range(dim):
                if low[t] != cur[t]:
                    same = False
                    break
        if not same:
            fill_block(field_key, low, dim, nb, rho, v_unit, s_unit, off, centers, vamps, samps)
            for t in range(dim):
                cur[t] = low[t]
            have = True
        V[i], S[i] = eval_bumps(x, centers, vamps, samps, inv_rb2, GV[i], GS[i])
    return V, GV, S, GS


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Environment:
    """A realized environment: callable fields plus kernel parameters."""

    spec: EnvironmentSpec
    kind_code: int = field(init=False)
    field_key: np.uint64 = field(init=False)
    offset: np.ndarray = field(init=False)

    def __post_init__(self):
        spec = self.spec
        object.__setattr__(self, "kind_code", KIND_CODES[spec.kind])
        object.__setattr__(
            self, "field_key", np.uint64(fold(np.uint64(spec.seed), _SALT_FIELD))
        )
        off = np.zeros(spec.dimension)
        if spec.kind == "random-bumps":
            okey = np.uint64(fold(np.uint64(spec.seed), _SALT_OFFSET))
            for t in range(spec.dimension):
                off[t] = uniform(okey, np.uint64(t)) * spec.cell_size
        object.__setattr__(self, "offset", off)

    # -- kernel parameter pack -------------------------------------------

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def v_inf(self) -> float:
        return self.spec.potential_bound

    @property
    def kernel_args(self) -> tuple:
        """Positional parameters consumed by the numba field kernels."""
        spec = self.spec
        denom = spec.bumps_per_cell * (1 << spec.dimension)
        return (
            np.int64(self.kind_code),
            np.int64(spec.dimension),
            np.uint64(self.field_key),
            float(spec.cell_size),
            4.0 / spec.cell_size**2,
            spec.bump_amplitude / denom,
            spec.aniso_amplitude / denom,
            float(spec.bump_amplitude),
            np.int64(spec.bumps_per_cell),
            self.offset,
        )

    # -- field queries -----------------------------------------------------

    def _fields(self, x):
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if X.shape[1] != self.dimension:
            raise ValueError(f"points have dimension {X.shape[1]}, environment has {self.dimension}")
        return eval_fields(*self.kernel_args, X)

    def potential(self, x):
        V, _, _, _ = self._fields(x)
        return V if np.ndim(x) > 1 else V[0]

    def grad_potential(self, x):
        _, GV, _, _ = self._fields(x)
        return GV if np.ndim(x) > 1 else GV[0]

    def log_scale(self, x):
        """s(x) with sigma(x) = exp(s(x)) I."""
        _, _, S, _ = self._fields(x)
        return S if np.ndim(x) > 1 else S[0]

    def grad_log_scale(self, x):
        _, _, _, GS = self._fields(x)
        return GS if np.ndim(x) > 1 else GS[0]

    def sigma_at(self, x):
        _, _, S, _ = self._fields(x)
        eye = np.eye(self.dimension)
        out = np.exp(S)[:, None, None] * eye[None, :, :]
        return out if np.ndim(x) > 1 else out[0]

    def diffusion_at(self, x):
        """a(x) = sigma sigma^T = exp(2 s) I."""
        _, _, S, _ = self._fields(x)
        eye = np.eye(self.dimension)
        out = np.exp(2.0 * S)[:, None, None] * eye[None, :, :]
        return out if np.ndim(x) > 1 else out[0]

    def div_diffusion_at(self, x):
        """(div a)_i = sum_j d_j a_ij = 2 exp(2 s) d_i s."""
        _, _, S, GS = self._fields(x)
        out = 2.0 * np.exp(2.0 * S)[:, None] * GS
        return out if np.ndim(x) > 1 else out[0]

    def drift_at(self, x):
        """b = 1/2 div a - a grad V = exp(2 s) (grad s - grad V)."""
        _, GV, S, GS = self._fields(x)
        out = np.exp(2.0 * S)[:, None] * (GS - GV)
        return out if np.ndim(x) > 1 else out[0]


def build_environment(spec: EnvironmentSpec) -> Environment:
    return Environment(spec)


def drift_at(env: Environment, x):
    return env.drift_at(x)
