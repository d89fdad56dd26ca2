"""Regression metrics, resampling protocols, ROC analysis and ratio maps."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import clone

from .exceptions import InvalidInputError

METRIC_NAMES = ("me", "rmse", "mae", "r", "r2")


@dataclass(frozen=True)
class MetricReport:
    """Bias, accuracy and fitness of a set of predictions.

    ``r`` is the Pearson correlation and ``r2`` the coefficient of
    determination; ``r_defined`` is False when either is undefined because
    ``y_true`` (or ``y_pred``, for ``r``) has zero variance, which includes
    the single-point test folds of leave-one-out.
    """

    me: float
    rmse: float
    mae: float
    r: float
    r2: float
    r_defined: bool = True

    def as_dict(self):
        return {k: getattr(self, k) for k in METRIC_NAMES}


def metrics(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise InvalidInputError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size < 1:
        raise InvalidInputError("need at least one value")
    err = y_pred - y_true
    me = float(np.mean(err))
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    dt = y_true - y_true.mean()
    dp = y_pred - y_pred.mean()
    ss_tot = float(dt @ dt)
    denom = math.sqrt(ss_tot * float(dp @ dp))
    r = float(dt @ dp) / denom if denom > 0 else math.nan
    r2 = 1.0 - float(err @ err) / ss_tot if ss_tot > 0 else math.nan
    return MetricReport(me, rmse, mae, r, r2, not math.isnan(r))


@dataclass
class EvalReport:
    """Per-split metrics with their mean and (population) standard deviation."""

    protocol: str
    runs: list
    train_sizes: list
    test_sizes: list
    seeds: list
    settings: dict = field(default_factory=dict)

    def _stack(self):
        return np.array([[getattr(m, k) for k in METRIC_NAMES] for m in self.runs], dtype=float)

    @property
    def mean(self):
        return dict(zip(METRIC_NAMES, np.mean(self._stack(), axis=0).tolist()))

    @property
    def std(self):
        return dict(zip(METRIC_NAMES, np.std(self._stack(), axis=0).tolist()))

    def formatted(self, digits=3):
        m, s = self.mean, self.std
        return {k: f"{m[k]:.{digits}f} ± {s[k]:.{digits}f}" for k in METRIC_NAMES}

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "settings": self.settings,
            "mean": self.mean,
            "std": self.std,
            "runs": [
                {"seed": s, "n_train": a, "n_test": b, **asdict(m)}
                for s, a, b, m in zip(self.seeds, self.train_sizes, self.test_sizes, self.runs)
            ],
        }


def make_estimator(model, **params):
    """Estimator for ``"gp"`` / ``"wgp"``, or a clone of an estimator instance."""
    from .gp import GPRegressor
    from .wgp import WarpedGPRegressor

    if model == "gp":
        params = {k: v for k, v in params.items() if k not in ("n_steps", "include_identity", "point_estimate")}
        return GPRegressor(**params)
    if model == "wgp":
        return WarpedGPRegressor(**params)
    if isinstance(model, str):
        raise InvalidInputError(f"unknown model family {model!r}")
    return clone(model).set_params(**params) if params else clone(model)


def _fit_score(dataset, train, test, model, seed, original_units, estimator_params):
    est = make_estimator(model, random_state=seed, **estimator_params)
    est.fit(dataset.features[train], dataset.target[train])
    pred = est.predict(dataset.features[test])
    truth = dataset.target[test]
    if original_units and dataset.transforms:
        truth = dataset.inverse_target(truth)
        pred = dataset.inverse_target(pred)
    return metrics(truth, pred)


def _derived_seeds(seed, count):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count) % (2**31 - 1)]


def split_sizes(n, rate):
    """Train/test sizes for a train fraction ``rate`` (floor rule)."""
    if not 0 < rate < 1:
        raise InvalidInputError(f"rate must lie in (0, 1), got {rate}")
    n_train = int(math.floor(rate * n))
    if n_train < 2 or n - n_train < 2:
        raise InvalidInputError(f"rate {rate} leaves too few rows on one side of a {n}-row split")
    return n_train, n - n_train


def repeated_split_eval(
    dataset, rate, repeats=10, model="gp", seed=0, original_units=True, estimator_params=None
):
    """Random train/test splits at a fixed training rate, refitted each time.

    Metrics are computed in original target units when the dataset carries
    target transforms and ``original_units`` is set.
    """
    n = len(dataset)
    n_train, n_test = split_sizes(n, rate)
    rng = np.random.default_rng(seed)
    seeds = _derived_seeds(seed, repeats)
    runs = []
    for r in range(repeats):
        perm = rng.permutation(n)
        runs.append(
            _fit_score(dataset, perm[:n_train], perm[n_train:], model, seeds[r], original_units, estimator_params or {})
        )
    return EvalReport(
        "rates",
        runs,
        [n_train] * repeats,
        [n_test] * repeats,
        seeds,
        {"rate": rate, "repeats": repeats, "seed": seed, "model": str(model)},
    )


def kfold_indices(n, k, seed=0):
    """Seeded shuffle cut into ``k`` contiguous folds; the first ``n % k`` are one larger."""
    if not 2 <= k <= n:
        raise InvalidInputError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [perm[bounds[i] : bounds[i + 1]] for i in range(k)]


def kfold_eval(dataset, k=4, model="gp", seed=0, original_units=True, estimator_params=None):
    """K-fold cross-validation; each fold is the test set exactly once."""
    n = len(dataset)
    folds = kfold_indices(n, k, seed)
    seeds = _derived_seeds(seed, k)
    runs, train_sizes, test_sizes = [], [], []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        runs.append(_fit_score(dataset, train, test, model, seeds[i], original_units, estimator_params or {}))
        train_sizes.append(train.size)
        test_sizes.append(test.size)
    return EvalReport("kfold", runs, train_sizes, test_sizes, seeds, {"k": k, "seed": seed, "model": str(model)})


def roc_auc(labels, confidences):
    """ROC points and trapezoidal area.

    Thresholds sweep the distinct confidences from high to low; tied
    confidences move together in one step, so ties count half. Returns
    ``(points, auc)`` where ``points`` is an ``(m, 2)`` array of
    ``(false positive rate, true positive rate)`` starting at ``(0, 0)``.
    The area is NaN when only one class is present.
    """
    labels = np.asarray(labels).ravel().astype(int)
    conf = np.asarray(confidences, dtype=float).ravel()
    if labels.size != conf.size:
        raise InvalidInputError("labels and confidences differ in length")
    if not np.all(np.isin(labels, (0, 1))):
        raise InvalidInputError("labels must be binary")
    if np.any(np.isnan(conf)):
        raise InvalidInputError("confidences contain NaN")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    order = np.argsort(-conf, kind="stable")
    conf, labels = conf[order], labels[order]
    # last index of each tie group
    ends = np.flatnonzero(np.r_[conf[1:] != conf[:-1], True])
    tp = np.cumsum(labels)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / n_pos] if n_pos else np.r_[0.0, np.zeros(ends.size)]
    fpr = np.r_[0.0, fp / n_neg] if n_neg else np.r_[0.0, np.zeros(ends.size)]
    points = np.column_stack([fpr, tpr])
    if n_pos == 0 or n_neg == 0:
        return points, math.nan
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return points, auc


def cv_ratio_mask(means, stds, threshold=0.2):
    """Coefficient of variation ``std / |mean|`` and the mask ``ratio < threshold``."""
    means = np.asarray(means, dtype=float).ravel()
    stds = np.asarray(stds, dtype=float).ravel()
    if means.size != stds.size:
        raise InvalidInputError("means and stds differ in length")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(means == 0, np.inf, stds / np.abs(means))
    mask = ratios < threshold
    frac = float(np.mean(mask)) if mask.size else math.nan
    return ratios, mask, frac


def write_report_csv(report, path, header=()):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["row", "seed", "n_train", "n_test", *METRIC_NAMES])
        for s, a, b, m in zip(report.seeds, report.train_sizes, report.test_sizes, report.runs):
            w.writerow(["run", s, a, b, *[repr(getattr(m, k)) for k in METRIC_NAMES]])
        w.writerow(["mean", "", "", "", *[repr(v) for v in report.mean.values()]])
        w.writerow(["std", "", "", "", *[repr(v) for v in report.std.values()]])


def write_report_json(reports, path, provenance=None):
    payload = {"provenance": provenance or {}, "reports": [r.to_dict() for r in reports]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, allow_nan=True)


def write_roc_csv(points, path, header=()):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr"])
        for fpr, tpr in points:
            w.writerow([repr(float(fpr)), repr(float(tpr))])
