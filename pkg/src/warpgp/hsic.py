"""Biased empirical Hilbert-Schmidt independence criterion for scalar samples."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .exceptions import InvalidInputError


@dataclass(frozen=True)
class HsicResult:
    statistic: float
    bandwidth_x: float
    bandwidth_y: float
    n: int


def median_bandwidth(u):
    """Median pairwise distance, or 1.0 when that median is zero."""
    med = float(np.median(pdist(u[:, None])))
    return med if med > 0 else 1.0


def _centered_gram(u, bandwidth):
    d2 = (u[:, None] - u[None, :]) ** 2
    K = np.exp(-d2 / (2.0 * bandwidth**2))
    row = K.mean(axis=0)
    return K - row[:, None] - row[None, :] + row.mean()


def _validate(u, v):
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != v.size:
        raise InvalidInputError(f"samples differ in length: {u.size} vs {v.size}")
    if u.size < 4:
        raise InvalidInputError("HSIC needs at least 4 samples")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise InvalidInputError("samples contain non-finite values")
    return u, v


def hsic_statistic(u, v, bandwidths=None):
    """``trace(K H L H) / n**2`` with Gaussian kernels.

    Bandwidths default to the median heuristic computed on ``u`` and ``v``.
    """
    u, v = _validate(u, v)
    bx, by = bandwidths if bandwidths is not None else (median_bandwidth(u), median_bandwidth(v))
    n = u.size
    Kc = _centered_gram(u, bx)
    Lc = _centered_gram(v, by)
    # H is idempotent, so tr(KHLH) = sum(HKH * HLH); this form is symmetric in (u, v)
    stat = float(np.sum(Kc * Lc)) / n**2
    return HsicResult(stat, float(bx), float(by), n)


def permutation_statistics(u, v, permutations, seed=0, bandwidths=None):
    """HSIC of ``u`` against ``permutations`` seeded shuffles of ``v``."""
    u, v = _validate(u, v)
    bx, by = bandwidths if bandwidths is not None else (median_bandwidth(u), median_bandwidth(v))
    n = u.size
    Kc = _centered_gram(u, bx)
    Lc = _centered_gram(v, by)
    rng = np.random.default_rng(seed)
    out = np.empty(int(permutations))
    for i in range(out.size):
        p = rng.permutation(n)
        # centring commutes with permutation, so permute the centred gram
        out[i] = np.sum(Kc * Lc[np.ix_(p, p)]) / n**2
    return out


def permutation_threshold(u, v, level=0.05, permutations=200, seed=0):
    """Empirical ``1 - level`` quantile of the permutation null distribution."""
    if not 0 < level < 1:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    if int(permutations) < 1:
        raise InvalidInputError("need at least one permutation")
    null = permutation_statistics(u, v, permutations, seed)
    return float(np.quantile(null, 1.0 - level))
