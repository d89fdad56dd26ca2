"""Monotone tanh-step output warp.

    g(y) = [y] + sum_l a_l * tanh(b_l * y + c_l),    a_l, b_l >= 0

The bracketed identity term is optional (on by default). With it the map is a
strictly increasing bijection of the real line; without it the range is
bounded and :func:`inverse` only works strictly inside that range.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, NumericalFailure, RangeError

DEFAULT_STEPS = 5
MAX_INVERSE_ITER = 200


@dataclass(frozen=True)
class WarpParams:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    include_identity: bool = True

    def __post_init__(self):
        a, b, c = (np.atleast_1d(np.asarray(v, dtype=float)).copy() for v in (self.a, self.b, self.c))
        if not (a.ndim == b.ndim == c.ndim == 1 and a.size == b.size == c.size and a.size >= 1):
            raise InvalidInputError("a, b, c must be vectors of equal, positive length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise InvalidInputError("warp parameters must be finite")
        if np.any(a < 0) or np.any(b < 0):
            raise InvalidInputError("warp step sizes a and steepness b must be non-negative")
        for name, v in zip("abc", (a, b, c)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "include_identity", bool(self.include_identity))

    @property
    def n_steps(self):
        return self.a.size

    @classmethod
    def identity(cls, n_steps=DEFAULT_STEPS, include_identity=True):
        """Warp with all step sizes zero; reduces to ``g(y) = y``."""
        return cls(np.zeros(n_steps), np.ones(n_steps), np.zeros(n_steps), include_identity)

    @classmethod
    def initial(cls, n_steps=DEFAULT_STEPS, include_identity=True, lo=-1.0, hi=1.0):
        """Near-identity starting point with step positions spread over ``[lo, hi]``."""
        centres = np.linspace(lo, hi, n_steps) if n_steps > 1 else np.array([0.5 * (lo + hi)])
        return cls(np.full(n_steps, 0.01), np.ones(n_steps), -centres, include_identity)

    def to_vector(self):
        """Optimizer coordinates ``[log a, log b, c]``."""
        with np.errstate(divide="ignore"):
            return np.concatenate([np.log(self.a), np.log(self.b), self.c])

    @classmethod
    def from_vector(cls, psi, include_identity=True):
        psi = np.asarray(psi, dtype=float)
        L = psi.size // 3
        return cls(np.exp(psi[:L]), np.exp(psi[L : 2 * L]), psi[2 * L :], include_identity)

    def to_dict(self):
        return {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "include_identity": self.include_identity,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["a"], d["b"], d["c"], d.get("include_identity", True))

    def range(self):
        """Infimum and supremum of ``g`` over the real line."""
        if self.include_identity:
            return -np.inf, np.inf
        flat = self.b == 0
        const = np.sum(self.a[flat] * np.tanh(self.c[flat]))
        span = np.sum(self.a[~flat])
        return const - span, const + span


def _check_finite(v, name):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return v


def _steps(params, y):
    # shape (..., L)
    return params.b * y[..., None] + params.c


def _sech2(u):
    e = np.exp(-2.0 * np.abs(u))
    return 4.0 * e / (1.0 + e) ** 2


def forward(params, y):
    """Warp ``y`` into latent space."""
    y = _check_finite(y, "y")
    z = np.sum(params.a * np.tanh(_steps(params, y)), axis=-1)
    if params.include_identity:
        z = z + y
    return z if z.ndim else float(z)


def derivative(params, y):
    """``dg/dy``; non-negative everywhere, at least 1 with the identity term."""
    y = _check_finite(y, "y")
    u = _steps(params, y)
    dz = np.sum(params.a * params.b * _sech2(u), axis=-1)
    if params.include_identity:
        dz = dz + 1.0
    return dz if dz.ndim else float(dz)


def param_gradients(params, y):
    """Gradients of ``g(y)`` and ``g'(y)`` with respect to ``[log a, log b, c]``.

    Returns two arrays of shape ``(N, 3L)``.
    """
    y = _check_finite(np.atleast_1d(y), "y")
    u = _steps(params, y)
    t = np.tanh(u)
    s2 = _sech2(u)
    a, b = params.a, params.b
    dz = np.concatenate([a * t, a * b * s2 * y[:, None], a * s2], axis=1)
    ab_s2 = a * b * s2
    ddz = np.concatenate([ab_s2, ab_s2 * (1.0 - 2.0 * t * b * y[:, None]), -2.0 * ab_s2 * t], axis=1)
    return dz, ddz


def inverse(params, z, tol=1e-10, max_iter=MAX_INVERSE_ITER):
    """Solve ``g(y) = z`` by safeguarded Newton iteration.

    Each iterate is kept inside a bracket found by doubling outward from ``z``;
    a Newton step that would leave the bracket is replaced by bisection.
    Convergence means ``|g(y) - z| < tol * max(1, |z|)``.
    """
    z = _check_finite(z, "z")
    scalar = z.ndim == 0
    z = np.atleast_1d(z).astype(float)
    lo_range, hi_range = params.range()
    if np.any(z <= lo_range) or np.any(z >= hi_range):
        raise RangeError(f"z outside the attainable warp range ({lo_range:.6g}, {hi_range:.6g})")

    target_tol = tol * np.maximum(1.0, np.abs(z))
    lo, hi = _bracket(params, z)
    y = np.clip(z, lo, hi)
    resid = forward(params, y) - z
    # work only on unconverged entries; `idx` maps them back into the full arrays
    idx = np.flatnonzero(resid != 0)
    yi, ri, lo, hi, zi = y[idx], resid[idx], lo[idx], hi[idx], z[idx]
    trust = np.ones(idx.size, dtype=bool)
    # residuals this small are rounding noise in forward(), so the root is resolved
    noise = 8 * np.finfo(float).eps * (1.0 + np.abs(z) + np.sum(np.abs(params.a)))
    for _ in range(max_iter):
        if idx.size == 0:
            break
        lo = np.where(ri < 0, yi, lo)
        hi = np.where(ri > 0, yi, hi)
        slope = derivative(params, yi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = ri / slope
        newton = yi - step
        ok = trust & np.isfinite(newton) & (newton > lo) & (newton < hi)
        yi = np.where(ok, newton, 0.5 * (lo + hi))
        small = ok & (np.abs(step) <= 1e-14 * (1.0 + np.abs(yi)))
        old = ri
        ri = forward(params, yi) - zi
        # a Newton step that fails to halve the residual is followed by bisection
        trust = ~ok | (np.abs(ri) <= 0.5 * np.abs(old))
        y[idx], resid[idx] = yi, ri
        # iterate down to rounding level, not just the stated tolerance
        keep = ~((np.abs(ri) <= noise[idx]) | small | (hi - lo <= 4 * np.spacing(np.abs(yi) + 1.0)))
        idx, yi, ri, lo, hi, zi, trust = idx[keep], yi[keep], ri[keep], lo[keep], hi[keep], zi[keep], trust[keep]
    if not np.all(np.abs(resid) < target_tol):
        worst = float(np.max(np.abs(resid) / np.maximum(1.0, np.abs(z))))
        raise NumericalFailure(f"warp inverse did not converge (relative residual {worst:.3g})")
    return float(y[0]) if scalar else y


def _bracket(params, z):
    if params.include_identity:
        # |g(y) - y| <= sum|a|, so the root lies within that distance of z
        reach = np.sum(np.abs(params.a)) * (1.0 + 1e-12) + 1e-300
        return z - reach, z + reach
    lo = z.copy()
    hi = z.copy()
    width = np.ones_like(z)
    for _ in range(1100):
        g_lo = forward(params, lo)
        g_hi = forward(params, hi)
        need_lo = g_lo > z
        need_hi = g_hi < z
        if not (np.any(need_lo) or np.any(need_hi)):
            return lo, hi
        lo = np.where(need_lo, lo - width, lo)
        hi = np.where(need_hi, hi + width, hi)
        width = width * 2.0
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            break
    raise NumericalFailure("could not bracket warp inverse")


def export_curve(params, y_grid, path=None, header=None):
    """Tabulate the warp on ``y_grid`` with both axes rescaled to ``[-1, 1]``.

    Returns an ``(n, 2)`` array; when ``path`` is given it is also written as
    a two-column CSV. ``header`` lines are written first as ``#`` comments.
    """
    y = np.asarray(y_grid, dtype=float)
    g = np.asarray(forward(params, y))
    curve = np.column_stack([_to_unit(y), _to_unit(g)])
    if path is not None:
        with open(path, "w", newline="") as fh:
            for line in header or ():
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["y", "g"])
            for row in curve:
                w.writerow([repr(float(v)) for v in row])
    return curve


def _to_unit(v):
    lo, hi = np.min(v), np.max(v)
    if hi == lo:
        return np.zeros_like(v)
    return 2.0 * (v - lo) / (hi - lo) - 1.0
