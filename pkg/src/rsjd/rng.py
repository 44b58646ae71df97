"""Counter-based random streams.

Every variate is a pure function of ``(seed, path, step, slot)``, so a path's
noise does not depend on how paths are batched or scheduled.  The mixing
function is the SplitMix64 finalizer applied along the counter chain.
"""

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STEP_K = np.uint64(0xD6E8FEB86659FD93)
_SLOT_K = np.uint64(0xCA5A826395121157)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 2.0 ** -53


def mix64(z):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _u64(value):
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


class CounterStream:
    """Stateless generator of uniforms and normals indexed by counters.

    Parameters
    ----------
    seed : int
        64-bit seed; negative values are reduced modulo 2**64.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._key = mix64(_u64(seed) ^ _GOLDEN)

    def bits(self, path, step, slot):
        return self.slot_bits(self.step_key(self.lane_key(path), step), slot)

    # the chain split in stages, so callers can cache per-path and per-step keys
    def lane_key(self, path):
        path = np.asarray(path, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return mix64(self._key + path * _GOLDEN)

    @staticmethod
    def step_key(lane_key, step):
        with np.errstate(over="ignore"):
            return mix64(lane_key ^ (np.asarray(step, dtype=np.uint64) * _STEP_K))

    @staticmethod
    def slot_bits(step_key, slot):
        slot = np.asarray(slot, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return mix64(step_key + slot * _SLOT_K + _GOLDEN)

    @staticmethod
    def to_uniform(h):
        return ((h >> _S11).astype(np.float64) + 0.5) * _TWO53

    def uniform(self, path, step, slot):
        """Uniform variates on the open interval (0, 1)."""
        return self.to_uniform(self.bits(path, step, slot))

    def normal(self, path, step, slot):
        return ndtri(self.uniform(path, step, slot))

    def path_seed(self, path):
        """Derived 64-bit seed for one path, e.g. to hand to numpy."""
        return int(mix64(self._key ^ mix64(_u64(path) + _GOLDEN)))


def poisson_inverse(u, mean):
    """Poisson(mean) variates by inversion of the uniforms ``u``.

    Vectorized sequential search; intended for small means (< ~30).
    """
    u = np.asarray(u, dtype=float)
    mean = np.broadcast_to(np.asarray(mean, dtype=float), u.shape)
    k = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-mean)
    cdf = p.copy()
    todo = u > cdf
    while np.any(todo):
        idx = np.nonzero(todo)[0] if u.ndim == 1 else np.nonzero(todo)
        k[idx] += 1
        p[idx] = p[idx] * mean[idx] / k[idx]
        cdf[idx] += p[idx]
        # guard against cdf stalling below u through rounding
        stalled = p[idx] < 1e-300
        todo[idx] = (u[idx] > cdf[idx]) & ~stalled
    return k
