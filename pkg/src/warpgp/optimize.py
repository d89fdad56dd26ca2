"""Limited-memory BFGS maximizer with backtracking Armijo line search."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, InvalidStartError, NumericalFailure


@dataclass(frozen=True)
class FitConfig:
    restarts: int = 5
    max_iterations: int = 500
    relative_tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if int(self.restarts) < 1 or int(self.max_iterations) < 1:
            raise InvalidInputError("restarts and max_iterations must be positive")
        if not self.relative_tolerance > 0:
            raise InvalidInputError("relative_tolerance must be positive")


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    initial_value: float
    iterations: int
    converged: bool
    degraded: bool = False
    message: str = ""
    trace: list = field(default_factory=list)


def _safe_eval(objective, x):
    try:
        value, grad = objective(x)
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError):
        return -np.inf, None
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        return -np.inf, None
    return value, grad


def maximize(objective, initial, config=None, memory=10):
    """Maximize a smooth function given as ``x -> (value, gradient)``.

    Stops when the accepted improvement drops below
    ``relative_tolerance * max(1, |value|)``, when the gradient vanishes, or
    after ``max_iterations``. A failed line search returns the best point so
    far with ``degraded=True``. Accepted values in ``trace`` never decrease.
    """
    config = config or FitConfig()
    x = np.array(initial, dtype=float)
    f, g = _safe_eval(objective, x)
    if g is None:
        raise InvalidStartError("objective is not finite at the initial point")

    trace = [f]
    s_hist, y_hist = [], []
    tol = config.relative_tolerance
    converged = degraded = False
    message = "iteration limit reached"
    it = 0
    for it in range(1, config.max_iterations + 1):
        if np.max(np.abs(g)) < 1e-10:
            converged, message = True, "gradient vanished"
            it -= 1
            break
        d = _two_loop(g, s_hist, y_hist)
        slope = d @ g
        if not slope > 0:
            # direction lost ascent property, fall back to steepest ascent
            s_hist.clear()
            y_hist.clear()
            d = g.copy()
            slope = d @ g
        step = 1.0 if s_hist else min(1.0, 1.0 / np.linalg.norm(g))
        x_new = f_new = g_new = None
        for _ in range(60):
            x_try = x + step * d
            if np.array_equal(x_try, x):
                break  # step fell below floating point resolution
            f_try, g_try = _safe_eval(objective, x_try)
            if g_try is not None and f_try >= f + 1e-4 * step * slope and f_try > f:
                x_new, f_new, g_new = x_try, f_try, g_try
                break
            step *= 0.5
        if x_new is None:
            degraded, message = True, "line search failed"
            break

        s = x_new - x
        yv = g - g_new  # curvature pair for the negated (minimized) objective
        if s @ yv > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        improvement = f_new - f
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if improvement < tol * max(1.0, abs(f)):
            converged, message = True, "relative improvement below tolerance"
            break

    return OptimizeResult(
        x=x,
        value=f,
        initial_value=trace[0],
        iterations=it,
        converged=converged,
        degraded=degraded,
        message=message,
        trace=trace,
    )


def _two_loop(g, s_hist, y_hist):
    # ascent direction H @ g, with H approximating the inverse Hessian of -f
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        rho = 1.0 / (y @ s)
        b = rho * (y @ q)
        q += (a - b) * s
    return q
