"""ARD squared-exponential covariance.

    k(x, x') = nu * exp(-sum_d (x_d - x'_d)**2 / (2 * l_d**2))

Hyperparameters are handled in log space throughout: the packed vector is
``[log nu, log l_1, ..., log l_D, log noise_variance]`` and every gradient
returned here is taken with respect to that vector.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import InvalidInputError, NumericalFailure

JITTER_START = 1e-10
JITTER_STOP = 1e-4


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if ls.ndim != 1 or ls.size == 0:
            raise InvalidInputError("lengthscales must be a non-empty vector")
        if not (self.signal_variance > 0 and np.isfinite(self.signal_variance)):
            raise InvalidInputError(f"signal_variance must be positive, got {self.signal_variance}")
        if not np.all((ls > 0) & np.isfinite(ls)):
            raise InvalidInputError(f"lengthscales must be positive, got {ls}")
        if not (self.noise_variance >= 0 and np.isfinite(self.noise_variance)):
            raise InvalidInputError(f"noise_variance must be non-negative, got {self.noise_variance}")

    @property
    def n_dims(self):
        return self.lengthscales.size

    @property
    def n_params(self):
        return self.n_dims + 2

    def to_vector(self):
        """Pack into log space. A zero noise variance maps to ``-inf``."""
        with np.errstate(divide="ignore"):
            log_noise = np.log(self.noise_variance)
        return np.concatenate([[np.log(self.signal_variance)], np.log(self.lengthscales), [log_noise]])

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[0]), np.exp(theta[1:-1]), np.exp(theta[-1]))

    def to_dict(self):
        return {
            "signal_variance": self.signal_variance,
            "lengthscales": self.lengthscales.tolist(),
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["signal_variance"], d["lengthscales"], d["noise_variance"])


@dataclass(frozen=True)
class GramMatrix:
    """Covariance matrix together with its lower Cholesky factor.

    ``entries`` already contains ``jitter_applied`` on the diagonal.
    """

    entries: np.ndarray
    chol: np.ndarray
    jitter_applied: float = 0.0


def _as_matrix(X, n_dims, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if n_dims == 1 else X.reshape(1, -1)
    if X.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[1] != n_dims:
        raise InvalidInputError(f"{name} has {X.shape[1]} columns but kernel has {n_dims} lengthscales")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return X


def _scaled_sqdist(params, X1, X2):
    # elementwise path shared by evaluate() and cross() so both agree bit for bit
    diff = X1[:, None, :] - X2[None, :, :]
    return np.sum(diff**2 / (2.0 * params.lengthscales**2), axis=-1)


def cross(params, X1, X2):
    """Noiseless covariance between the rows of ``X1`` and ``X2``."""
    X1 = _as_matrix(X1, params.n_dims, "X1")
    X2 = _as_matrix(X2, params.n_dims, "X2")
    return params.signal_variance * np.exp(-_scaled_sqdist(params, X1, X2))


def evaluate(params, x, x2):
    """Covariance between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != (params.n_dims,) or x2.shape != (params.n_dims,):
        raise InvalidInputError(
            f"points must have {params.n_dims} coordinates, got {x.shape} and {x2.shape}"
        )
    return float(cross(params, x[None, :], x2[None, :])[0, 0])


def cholesky_with_jitter(C, *, start=JITTER_START, stop=JITTER_STOP):
    """Lower Cholesky factor of ``C``, adding diagonal jitter if needed.

    Jitter starts at ``start * mean(diag)`` and grows tenfold up to
    ``stop * mean(diag)``. Returns ``(C + jitter * I, L, jitter)``.
    """
    try:
        return C, linalg.cholesky(C, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(C)))
    if not np.isfinite(scale) or scale <= 0:
        raise NumericalFailure("covariance diagonal is not positive", jitter=0.0)
    level = start
    jitter = level * scale
    while level <= stop * (1 + 1e-12):
        jitter = level * scale
        Cj = C + jitter * np.eye(C.shape[0])
        try:
            return Cj, linalg.cholesky(Cj, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            level *= 10.0
    raise NumericalFailure(f"Cholesky failed with jitter up to {jitter:.3g}", jitter=jitter)


def gram(params, X, add_noise=True):
    """Training covariance, optionally with the noise variance on the diagonal."""
    X = _as_matrix(X, params.n_dims)
    K = cross(params, X, X)
    if add_noise:
        K[np.diag_indices_from(K)] += params.noise_variance
    entries, L, jitter = cholesky_with_jitter(K)
    return GramMatrix(entries, L, jitter)


def gram_gradients(params, X):
    """Derivatives of ``K + noise * I`` with respect to the packed log parameters.

    Returns an array of shape ``(D + 2, N, N)`` ordered like
    :meth:`KernelParams.to_vector`.
    """
    X = _as_matrix(X, params.n_dims)
    n = X.shape[0]
    K = cross(params, X, X)
    grads = np.empty((params.n_params, n, n))
    grads[0] = K
    for d in range(params.n_dims):
        diff = X[:, d, None] - X[None, :, d]
        grads[1 + d] = K * (diff**2 / params.lengthscales[d] ** 2)
    grads[-1] = params.noise_variance * np.eye(n)
    return grads
