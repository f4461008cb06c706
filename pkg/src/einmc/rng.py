"""Counter-based random streams.

Every random draw in the package is a pure function of a 64-bit stream key
and a 64-bit counter. Keys fold integer identifiers (base seed, environment
id, path id) through the SplitMix64 finalizer, so any path can be regenerated
in isolation and work can be scheduled across threads in any order without
changing a single draw.

Gaussian increments come from Box-Muller pairs, which consume exactly two
uniforms per pair (no rejection step), keeping the draw for a given
(key, step, component) a fixed function of those integers.
"""

import numba
import numpy as np

__all__ = ["fold", "path_key", "uniform", "normal_pair", "uniforms", "normals"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * np.pi


@numba.njit(cache=True, inline="always")
def _finalize(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def fold(state, value):
    """Absorb one 64-bit value into a stream key."""
    return _finalize((state + _GOLDEN) ^ _finalize(value + _GOLDEN))


@numba.njit(cache=True, inline="always")
def uniform(key, counter):
    """Draw number `counter` from stream `key`, uniform on (0, 1]."""
    z = _finalize(key + (counter + np.uint64(1)) * _GOLDEN)
    return ((z >> np.uint64(11)) + np.uint64(1)) * _INV53


@numba.njit(cache=True, inline="always")
def normal_pair(key, pair_index):
    """Two independent standard normals for (stream, pair counter)."""
    c = np.uint64(2) * pair_index
    u1 = uniform(key, c)
    u2 = uniform(key, c + np.uint64(1))
    r = np.sqrt(-2.0 * np.log(u1))
    th = _TWO_PI * u2
    return r * np.cos(th), r * np.sin(th)


@numba.njit(cache=True)
def path_key(base_seed, env_id, map_id):
    """Stream key for one path: fold(base seed, environment id, path id)."""
    k = fold(np.uint64(0), np.uint64(base_seed))
    k = fold(k, np.uint64(env_id))
    return fold(k, np.uint64(map_id))


@numba.njit(cache=True)
def uniforms(key, start, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(np.uint64(key), np.uint64(start + i))
    return out


@numba.njit(cache=True)
def normals(key, start_pair, n_pairs):
    out = np.empty(2 * n_pairs)
    for i in range(n_pairs):
        a, b = normal_pair(np.uint64(key), np.uint64(start_pair + i))
        out[2 * i] = a
        out[2 * i + 1] = b
    return out
