"""Exact Gaussian process regression with an ARD kernel.

The functional layer (:func:`log_marginal_likelihood`, :func:`condition`,
:func:`fit`, :func:`predict`) works on plain arrays; :class:`GPRegressor`
wraps it in the scikit-learn estimator protocol.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from scipy.spatial.distance import pdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import kernel
from .exceptions import FitFailure, InvalidInputError, NumericalFailure
from .kernel import KernelParams
from .optimize import FitConfig, maximize

LOG_2PI = np.log(2.0 * np.pi)
# log-space box outside which the evidence is treated as -inf
LOG_PARAM_BOUND = 25.0


def _cho_inverse(L):
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalFailure(f"dpotri failed with info={info}")
    inv = np.tril(inv)
    return inv + np.tril(inv, -1).T


def evidence_terms(params, X, y):
    """Shared pieces of the evidence: ``(value, alpha, W, gram)``.

    ``W = alpha alpha^T - C^{-1}`` so that the derivative of the evidence in
    the direction of ``dC`` is ``0.5 * sum(W * dC)``.
    """
    G = kernel.gram(params, X, add_noise=True)
    L = G.chol
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    n = y.shape[0]
    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    W = np.outer(alpha, alpha) - _cho_inverse(L)
    return value, alpha, W, G


def log_marginal_likelihood(params, X, y):
    """Log evidence of centred targets ``y`` and its gradient in log-parameters."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0] or y.size == 0:
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    value, _, W, _ = evidence_terms(params, X, y)
    dK = kernel.gram_gradients(params, X)
    grad = 0.5 * np.einsum("ij,pij->p", W, dK)
    return float(value), grad


@dataclass
class PredictiveDist:
    """Gaussian predictive marginals, one entry per test point."""

    mean: np.ndarray
    variance: np.ndarray

    @property
    def std(self):
        return np.sqrt(self.variance)

    def __len__(self):
        return self.mean.size


@dataclass
class GpModel:
    X_train: np.ndarray  # standardized inputs
    y_train: np.ndarray  # centred targets
    y_mean: float
    kernel_params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    jitter: float = 0.0
    log_likelihood: float = float("nan")

    def standardize(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, self.x_mean.size)
        if X.shape[1] != self.x_mean.size:
            raise InvalidInputError(f"expected {self.x_mean.size} input columns, got {X.shape[1]}")
        return (X - self.x_mean) / self.x_scale

    def to_dict(self):
        return {
            "kernel_params": self.kernel_params.to_dict(),
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "X_train": self.X_train.tolist(),
            "y_train": self.y_train.tolist(),
            "y_mean": self.y_mean,
            "alpha": self.alpha.tolist(),
            "jitter": self.jitter,
            "log_likelihood": self.log_likelihood,
        }

    @classmethod
    def from_dict(cls, d):
        params = KernelParams.from_dict(d["kernel_params"])
        X = np.asarray(d["X_train"], dtype=float).reshape(-1, params.n_dims)
        G = kernel.gram(params, X, add_noise=True)
        if G.jitter_applied != d.get("jitter", G.jitter_applied):
            raise NumericalFailure("stored jitter does not match the rebuilt covariance", jitter=G.jitter_applied)
        return cls(
            X_train=X,
            y_train=np.asarray(d["y_train"], dtype=float),
            y_mean=float(d["y_mean"]),
            kernel_params=params,
            chol=G.chol,
            alpha=np.asarray(d["alpha"], dtype=float),
            x_mean=np.asarray(d["x_mean"], dtype=float),
            x_scale=np.asarray(d["x_scale"], dtype=float),
            jitter=G.jitter_applied,
            log_likelihood=float(d.get("log_likelihood", "nan")),
        )


def standardization(X, normalize=True):
    """Per-column mean and scale; constant columns keep scale 1."""
    X = np.asarray(X, dtype=float)
    if not normalize:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    scale = X.std(axis=0)
    scale[~(scale > 0)] = 1.0
    return X.mean(axis=0), scale


def condition(params, X, y, x_mean=None, x_scale=None):
    """Build a :class:`GpModel` from fixed hyperparameters (no optimization)."""
    X, y = _validate_xy(X, y)
    if x_mean is None:
        x_mean, x_scale = standardization(X, normalize=False)
    Xs = (X - x_mean) / x_scale
    y_mean = float(np.mean(y))
    yc = y - y_mean
    value, alpha, _, G = evidence_terms(params, Xs, yc)
    return GpModel(
        X_train=Xs,
        y_train=yc,
        y_mean=y_mean,
        kernel_params=params,
        chol=G.chol,
        alpha=alpha,
        x_mean=np.asarray(x_mean, dtype=float),
        x_scale=np.asarray(x_scale, dtype=float),
        jitter=G.jitter_applied,
        log_likelihood=float(value),
    )


def initial_params(X, y):
    """Scale-aware starting hyperparameters for standardized ``X`` and centred ``y``."""
    var = float(np.var(y))
    if not var > 0:
        var = 1.0
    ls = np.empty(X.shape[1])
    for d in range(X.shape[1]):
        med = np.median(pdist(X[:, d : d + 1])) if X.shape[0] > 1 else 0.0
        ls[d] = med if med > 0 else 1.0
    return KernelParams(var, ls, 0.1 * var)


def evidence_objective(X, y):
    """Closure ``theta -> (evidence, gradient)`` over packed log-parameters."""

    def objective(theta):
        if np.any(np.abs(theta) > LOG_PARAM_BOUND):
            raise NumericalFailure("hyperparameters left the admissible box")
        return log_marginal_likelihood(KernelParams.from_vector(theta), X, y)

    return objective


@dataclass
class FitInfo:
    restarts: list = field(default_factory=list)
    best_restart: int = -1

    @property
    def best(self):
        return self.restarts[self.best_restart]

    def summary(self):
        return [
            {
                "restart": i,
                "status": "ok" if not isinstance(r, str) else "failed",
                **(
                    {
                        "initial_value": r.initial_value,
                        "final_value": r.value,
                        "iterations": r.iterations,
                        "converged": r.converged,
                        "degraded": r.degraded,
                        "message": r.message,
                    }
                    if not isinstance(r, str)
                    else {"message": r}
                ),
            }
            for i, r in enumerate(self.restarts)
        ]


def perturb(theta0, rng, scale=1.0):
    return theta0 + scale * rng.standard_normal(theta0.shape)


def multistart(objective, theta0, config, sampler=perturb):
    """Run :func:`maximize` from ``theta0`` and ``restarts - 1`` other starts.

    Extra starts come from ``sampler(theta0, rng)``; the default adds unit
    Gaussian noise in log space. Returns ``(best_x, info)`` and raises
    :class:`FitFailure` when every restart fails.
    """
    rng = np.random.default_rng(config.seed)
    theta0 = np.asarray(theta0, dtype=float)
    info = FitInfo()
    best_value = -np.inf
    for r in range(config.restarts):
        start = theta0.copy() if r == 0 else sampler(theta0, rng)
        try:
            res = maximize(objective, start, config)
        except NumericalFailure as exc:
            info.restarts.append(f"{type(exc).__name__}: {exc}")
            continue
        info.restarts.append(res)
        if res.value > best_value:
            best_value = res.value
            info.best_restart = r
    if info.best_restart < 0:
        raise FitFailure("all optimizer restarts failed", diagnostics=info.restarts)
    return info.best.x, info


def fit(X, y, config=None, normalize_X=True):
    """Type-II maximum likelihood fit. Returns ``(GpModel, FitInfo)``."""
    config = config or FitConfig()
    X, y = _validate_xy(X, y)
    if X.shape[0] < 2:
        raise InvalidInputError("need at least two training points")
    x_mean, x_scale = standardization(X, normalize_X)
    Xs = (X - x_mean) / x_scale
    yc = y - np.mean(y)
    theta0 = initial_params(Xs, yc).to_vector()
    theta, info = multistart(evidence_objective(Xs, yc), theta0, config)
    model = condition(KernelParams.from_vector(theta), X, y, x_mean, x_scale)
    return model, info


def predict(model, X_test):
    """Posterior predictive marginals (noise included) at ``X_test``."""
    Xs = model.standardize(X_test)
    if not np.all(np.isfinite(Xs)):
        raise InvalidInputError("X_test contains non-finite values")
    p = model.kernel_params
    Ks = kernel.cross(p, Xs, model.X_train)
    mean = Ks @ model.alpha + model.y_mean
    v = linalg.solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    latent = np.maximum(p.signal_variance - np.sum(v**2, axis=0), 0.0)
    return PredictiveDist(mean, p.noise_variance + latent)


def _validate_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size:
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    if X.shape[0] == 0:
        raise InvalidInputError("no training data")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInputError("training data contains non-finite values")
    return X, y


class GPRegressor(RegressorMixin, BaseEstimator):
    """Gaussian process regressor with ARD kernel and evidence maximization.

    Parameters
    ----------
    restarts : int
        Optimizer restarts; the first starts from a data-driven guess.
    max_iter : int
        Iteration cap per restart.
    tol : float
        Relative improvement tolerance of the optimizer.
    normalize_X : bool
        Z-score the inputs before fitting.
    kernel_params : KernelParams, optional
        Hyperparameters to use when ``optimize`` is False.
    optimize : bool
        If False, condition on ``kernel_params`` without fitting them.
    random_state : int
        Seed for restart perturbations.
    """

    def __init__(
        self,
        restarts=5,
        max_iter=500,
        tol=1e-6,
        normalize_X=True,
        kernel_params=None,
        optimize=True,
        random_state=0,
    ):
        self.restarts = restarts
        self.max_iter = max_iter
        self.tol = tol
        self.normalize_X = normalize_X
        self.kernel_params = kernel_params
        self.optimize = optimize
        self.random_state = random_state

    def _config(self):
        return FitConfig(self.restarts, self.max_iter, self.tol, int(self.random_state or 0))

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if self.optimize:
            self.model_, self.fit_info_ = fit(X, y, self._config(), self.normalize_X)
        else:
            if self.kernel_params is None:
                raise InvalidInputError("kernel_params is required when optimize=False")
            x_mean, x_scale = standardization(X, self.normalize_X)
            self.model_ = condition(self.kernel_params, X, y, x_mean, x_scale)
            self.fit_info_ = FitInfo()
        self.kernel_params_ = self.model_.kernel_params
        self.log_marginal_likelihood_value_ = self.model_.log_likelihood
        self.n_features_in_ = X.shape[1]
        return self

    def predictive(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return predict(self.model_, X)

    def predict(self, X, return_std=False):
        dist = self.predictive(X)
        if return_std:
            return dist.mean, dist.std
        return dist.mean

    def to_dict(self):
        check_is_fitted(self, "model_")
        return {"family": "gp", "estimator": _plain_params(self), "model": self.model_.to_dict()}

    @classmethod
    def from_dict(cls, d):
        est = cls(**d.get("estimator", {}))
        est.model_ = GpModel.from_dict(d["model"])
        est.fit_info_ = FitInfo()
        est.kernel_params_ = est.model_.kernel_params
        est.log_marginal_likelihood_value_ = est.model_.log_likelihood
        est.n_features_in_ = est.model_.x_mean.size
        return est


def _plain_params(est):
    out = {}
    for k, v in est.get_params(deep=False).items():
        if hasattr(v, "to_dict"):
            continue
        out[k] = v.item() if isinstance(v, np.generic) else v
    return out


def load_model(path):
    """Load a GP or warped GP estimator saved with :func:`save_model`."""
    with open(path) as fh:
        d = json.load(fh)
    if d.get("family") == "wgp":
        from .wgp import WarpedGPRegressor

        return WarpedGPRegressor.from_dict(d)
    return GPRegressor.from_dict(d)


def save_model(estimator, path, provenance=None):
    d = estimator.to_dict()
    if provenance is not None:
        d = {"provenance": provenance, **d}
    with open(path, "w") as fh:
        json.dump(d, fh, indent=1)
