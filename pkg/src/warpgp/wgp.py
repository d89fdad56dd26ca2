"""Warped Gaussian process regression.

Targets are mapped affinely onto ``[-1, 1]``, pushed through a monotone warp
``z = g(y)`` and modelled by an ordinary GP in latent space. The warp and the
kernel hyperparameters are learned together by maximizing

    log N(g(y) | 0, K + noise * I) + sum_i log g'(y_i).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import gp, kernel, warp
from .exceptions import DegenerateWarpError, InvalidInputError, NumericalFailure, RangeError
from .kernel import KernelParams
from .optimize import FitConfig
from .warp import WarpParams

GH_ORDER = 20
GH_CHECK_TOL = 1e-6
# upper bound on log a and log b during fitting; larger values only buy
# saturated tanh tails whose latent values lose precision to cancellation
WARP_LOG_UPPER = 10.0


def _unpack(vec, n_dims, include_identity):
    k = n_dims + 2
    return KernelParams.from_vector(vec[:k]), WarpParams.from_vector(vec[k:], include_identity)


def wgp_log_likelihood(kernel_params, warp_params, X, y, center=False):
    """Joint log likelihood and its gradient.

    The gradient is ordered ``[kernel log-params, log a, log b, c]``. With
    ``center=True`` the warped targets are mean-centred before the Gaussian
    term, as done during fitting.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size or y.size == 0:
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    z = np.atleast_1d(warp.forward(warp_params, y))
    slope = np.atleast_1d(warp.derivative(warp_params, y))
    if np.any(slope <= 0):
        raise DegenerateWarpError("warp derivative vanishes at a training target")
    if center:
        z = z - z.mean()

    value, alpha, W, _ = gp.evidence_terms(kernel_params, X, z)
    dK = kernel.gram_gradients(kernel_params, X)
    grad_kernel = 0.5 * np.einsum("ij,pij->p", W, dK)

    dz, dslope = warp.param_gradients(warp_params, y)
    a_eff = alpha - alpha.mean() if center else alpha
    grad_warp = -a_eff @ dz + np.sum(dslope / slope[:, None], axis=0)

    value = float(value + np.sum(np.log(slope)))
    return value, np.concatenate([grad_kernel, grad_warp])


@dataclass
class TargetScaling:
    """Affine map ``y_s = scale * (y - center)`` onto ``[-1, 1]``."""

    center: float = 0.0
    scale: float = 1.0

    @classmethod
    def fit(cls, y):
        lo, hi = float(np.min(y)), float(np.max(y))
        if hi > lo:
            return cls(0.5 * (lo + hi), 2.0 / (hi - lo))
        return cls(lo, 1.0)

    def transform(self, y):
        return self.scale * (np.asarray(y, dtype=float) - self.center)

    def inverse(self, ys):
        return np.asarray(ys, dtype=float) / self.scale + self.center


@dataclass
class WgpModel:
    gp: gp.GpModel  # fitted on the warped targets
    warp_params: WarpParams
    target_scaling: TargetScaling
    latent_targets: np.ndarray
    log_likelihood: float = float("nan")

    def to_dict(self):
        return {
            "gp": self.gp.to_dict(),
            "warp_params": self.warp_params.to_dict(),
            "target_scaling": {"center": self.target_scaling.center, "scale": self.target_scaling.scale},
            "latent_targets": self.latent_targets.tolist(),
            "log_likelihood": self.log_likelihood,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            gp=gp.GpModel.from_dict(d["gp"]),
            warp_params=WarpParams.from_dict(d["warp_params"]),
            target_scaling=TargetScaling(**d["target_scaling"]),
            latent_targets=np.asarray(d["latent_targets"], dtype=float),
            log_likelihood=float(d.get("log_likelihood", "nan")),
        )


def condition(kernel_params, warp_params, X, y, x_mean=None, x_scale=None, target_scaling=None):
    """Build a :class:`WgpModel` from fixed kernel and warp parameters."""
    X, y = gp._validate_xy(X, y)
    scaling = target_scaling or TargetScaling.fit(y)
    ys = scaling.transform(y)
    z = np.atleast_1d(warp.forward(warp_params, ys))
    slope = np.atleast_1d(warp.derivative(warp_params, ys))
    if np.any(slope <= 0):
        raise DegenerateWarpError("warp derivative vanishes at a training target")
    latent = gp.condition(kernel_params, X, z, x_mean, x_scale)
    # jacobian of the affine scaling is a constant and is left out
    loglik = latent.log_likelihood + float(np.sum(np.log(slope)))
    return WgpModel(latent, warp_params, scaling, z, loglik)


@dataclass
class WgpFitInfo:
    gp_info: gp.FitInfo
    warp_info: gp.FitInfo
    initial_value: float = float("nan")
    gp_only_value: float = float("nan")
    extra: dict = field(default_factory=dict)


def fit(X, y, config=None, n_steps=warp.DEFAULT_STEPS, include_identity=True, normalize_X=True):
    """Jointly fit kernel and warp parameters. Returns ``(WgpModel, WgpFitInfo)``.

    The kernel is first fitted by an ordinary GP on the scaled targets; the
    joint search then starts from that solution with a near-identity warp.
    """
    config = config or FitConfig()
    X, y = gp._validate_xy(X, y)
    if X.shape[0] < 2:
        raise InvalidInputError("need at least two training points")
    x_mean, x_scale = gp.standardization(X, normalize_X)
    Xs = (X - x_mean) / x_scale
    scaling = TargetScaling.fit(y)
    ys = scaling.transform(y)

    gp_model, gp_info = gp.fit(Xs, ys, config, normalize_X=False)
    theta_k = gp_model.kernel_params.to_vector()
    psi0 = WarpParams.initial(n_steps, include_identity).to_vector()
    start = np.concatenate([theta_k, psi0])
    n_dims = X.shape[1]

    def objective(vec):
        k = n_dims + 2
        if np.any(np.abs(vec[:k]) > gp.LOG_PARAM_BOUND) or np.any(vec[k : k + 2 * n_steps] > WARP_LOG_UPPER):
            raise NumericalFailure("parameters left the admissible box")
        kp, wp = _unpack(vec, n_dims, include_identity)
        return wgp_log_likelihood(kp, wp, Xs, ys, center=True)

    try:
        initial_value = objective(start)[0]
    except (NumericalFailure, RangeError):
        initial_value = float("nan")
    vec, warp_info = gp.multistart(objective, start, config, _restart_sampler(n_dims, n_steps))
    kp, wp = _unpack(vec, n_dims, include_identity)
    model = condition(kp, wp, X, y, x_mean, x_scale, scaling)
    info = WgpFitInfo(gp_info, warp_info, initial_value, gp_model.log_likelihood)
    return model, info


def _restart_sampler(n_dims, n_steps):
    k = n_dims + 2

    def sample(vec0, rng):
        # kernel stays near the GP solution; the warp is drawn broadly so
        # restarts reach strongly nonlinear shapes the identity start misses
        vec = vec0.copy()
        vec[:k] += 0.3 * rng.standard_normal(k)
        log_a = rng.uniform(np.log(0.1), np.log(10.0), n_steps)
        log_b = rng.uniform(np.log(0.5), np.log(10.0), n_steps)
        position = rng.uniform(-1.0, 1.0, n_steps)
        vec[k:] = np.concatenate([log_a, log_b, -np.exp(log_b) * position])
        return vec

    return sample


class WarpedPredictive:
    """Per-point predictive distributions of a warped GP.

    Holds the latent Gaussian ``N(mu, sigma^2)`` for each test point; output
    space summaries are obtained by pulling it back through the warp.
    """

    def __init__(self, latent_mean, latent_std, warp_params, target_scaling):
        self.latent_mean = np.atleast_1d(np.asarray(latent_mean, dtype=float))
        self.latent_std = np.atleast_1d(np.asarray(latent_std, dtype=float))
        self.warp_params = warp_params
        self.target_scaling = target_scaling

    def __len__(self):
        return self.latent_mean.size

    def _pull_back(self, z):
        try:
            ys = warp.inverse(self.warp_params, z)
        except RangeError as exc:
            raise DegenerateWarpError(str(exc)) from exc
        return self.target_scaling.inverse(ys)

    def median(self):
        return self._pull_back(self.latent_mean)

    def quantile(self, q):
        q = float(q)
        if not 0 < q < 1:
            raise InvalidInputError(f"quantile level must lie in (0, 1), got {q}")
        return self._pull_back(self.latent_mean + self.latent_std * stats.norm.ppf(q))

    def _expect(self, fn, order):
        nodes, weights = np.polynomial.hermite.hermgauss(order)
        z = self.latent_mean[:, None] + np.sqrt(2.0) * self.latent_std[:, None] * nodes
        vals = fn(self._pull_back(z.ravel()).reshape(z.shape))
        return vals @ weights / np.sqrt(np.pi)

    def mean(self, order=GH_ORDER, check=False):
        """Predictive mean by Gauss-Hermite quadrature.

        With ``check=True`` the result is compared against double the order
        and a warning is issued if they differ by more than 1e-6 relative.
        """
        m = self._expect(lambda v: v, order)
        if check:
            rel = self.quadrature_error(order, m)
            if np.any(rel > GH_CHECK_TOL):
                warnings.warn(
                    f"Gauss-Hermite order {order} mean changes by {np.max(rel):.2e} at order {2 * order}",
                    RuntimeWarning,
                    stacklevel=2,
                )
        return m

    def quadrature_error(self, order=GH_ORDER, base=None):
        """Relative change of the mean when the quadrature order is doubled."""
        base = self._expect(lambda v: v, order) if base is None else base
        fine = self._expect(lambda v: v, 2 * order)
        return np.abs(fine - base) / np.maximum(np.abs(fine), 1e-300)

    def std(self, order=GH_ORDER):
        m = self._expect(lambda v: v, order)
        second = self._expect(lambda v: v**2, order)
        return np.sqrt(np.maximum(second - m**2, 0.0))

    def density(self, y):
        """Predictive density at ``y``.

        A scalar ``y`` gives one value per test point; a 1-D ``y`` gives an
        array of shape ``(n_points, len(y))``.
        """
        y = np.asarray(y, dtype=float)
        ys = self.target_scaling.transform(y)
        z = np.asarray(warp.forward(self.warp_params, ys))
        slope = np.asarray(warp.derivative(self.warp_params, ys))
        mu = self.latent_mean[:, None] if y.ndim else self.latent_mean
        sd = self.latent_std[:, None] if y.ndim else self.latent_std
        return stats.norm.pdf(z, loc=mu, scale=sd) * slope * self.target_scaling.scale

    def interval(self, lower=0.025, upper=0.975):
        return self.quantile(lower), self.quantile(upper)


def predict(model, X_test):
    """Latent predictive distribution at ``X_test`` wrapped for output-space queries."""
    latent = gp.predict(model.gp, X_test)
    return WarpedPredictive(latent.mean, latent.std, model.warp_params, model.target_scaling)


class WarpedGPRegressor(RegressorMixin, BaseEstimator):
    """Warped GP regressor with a tanh-step monotone warp.

    Parameters
    ----------
    n_steps : int
        Number of tanh steps in the warp.
    include_identity : bool
        Add the identity term so the warp is a bijection of the real line.
    point_estimate : {"median", "mean"}
        Summary returned by :meth:`predict`.
    restarts, max_iter, tol, normalize_X, random_state
        As in :class:`~warpgp.gp.GPRegressor`.
    kernel_params, warp_params : optional
        Fixed parameters used when ``optimize`` is False.
    """

    def __init__(
        self,
        n_steps=warp.DEFAULT_STEPS,
        include_identity=True,
        point_estimate="median",
        restarts=5,
        max_iter=500,
        tol=1e-6,
        normalize_X=True,
        kernel_params=None,
        warp_params=None,
        optimize=True,
        random_state=0,
    ):
        self.n_steps = n_steps
        self.include_identity = include_identity
        self.point_estimate = point_estimate
        self.restarts = restarts
        self.max_iter = max_iter
        self.tol = tol
        self.normalize_X = normalize_X
        self.kernel_params = kernel_params
        self.warp_params = warp_params
        self.optimize = optimize
        self.random_state = random_state

    def fit(self, X, y):
        if self.point_estimate not in ("median", "mean"):
            raise InvalidInputError(f"point_estimate must be 'median' or 'mean', got {self.point_estimate!r}")
        X, y = check_X_y(X, y, y_numeric=True)
        if self.optimize:
            config = FitConfig(self.restarts, self.max_iter, self.tol, int(self.random_state or 0))
            self.model_, self.fit_info_ = fit(
                X, y, config, self.n_steps, self.include_identity, self.normalize_X
            )
        else:
            if self.kernel_params is None or self.warp_params is None:
                raise InvalidInputError("kernel_params and warp_params are required when optimize=False")
            x_mean, x_scale = gp.standardization(X, self.normalize_X)
            self.model_ = condition(self.kernel_params, self.warp_params, X, y, x_mean, x_scale)
            self.fit_info_ = None
        self.kernel_params_ = self.model_.gp.kernel_params
        self.warp_params_ = self.model_.warp_params
        self.log_marginal_likelihood_value_ = self.model_.log_likelihood
        self.n_features_in_ = X.shape[1]
        return self

    def predictive(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, check_array(X))

    def predict(self, X, return_std=False):
        dist = self.predictive(X)
        point = dist.median() if self.point_estimate == "median" else dist.mean()
        if return_std:
            return point, dist.std()
        return point

    def warp_curve(self, n=200, path=None, header=None):
        """Learned warp on a grid spanning the training target range."""
        check_is_fitted(self, "model_")
        grid = np.linspace(-1.0, 1.0, n)
        return warp.export_curve(self.warp_params_, grid, path, header)

    def to_dict(self):
        check_is_fitted(self, "model_")
        return {"family": "wgp", "estimator": gp._plain_params(self), "model": self.model_.to_dict()}

    @classmethod
    def from_dict(cls, d):
        est = cls(**d.get("estimator", {}))
        est.model_ = WgpModel.from_dict(d["model"])
        est.fit_info_ = None
        est.kernel_params_ = est.model_.gp.kernel_params
        est.warp_params_ = est.model_.warp_params
        est.log_marginal_likelihood_value_ = est.model_.log_likelihood
        est.n_features_in_ = est.model_.gp.x_mean.size
        return est
