"""Additive-noise-model direction scoring for bivariate cause-effect pairs.

For a pair ``(x, y)`` two regressions are fitted, ``y | x`` and ``x | y``.
The residuals of each (observed minus predicted) are tested for dependence
on the respective input with HSIC; the direction whose residuals look more
independent is preferred. ``score = hsic_forward - hsic_backward`` so a
negative score means ``x -> y``.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from . import hsic
from .exceptions import InvalidInputError, NumericalFailure, ScoringFailure

FORWARD, BACKWARD, UNKNOWN = "->", "<-", "?"
RESIDUAL_CONVENTION = "residual = observed - predicted (point estimate)"
MIN_PAIR_SIZE = 20


@dataclass
class CausalPair:
    id: str
    x: np.ndarray
    y: np.ndarray
    ground_truth: str = UNKNOWN
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.x.size != self.y.size:
            raise InvalidInputError(f"pair {self.id}: x and y differ in length")
        if self.ground_truth not in (FORWARD, BACKWARD, UNKNOWN):
            raise InvalidInputError(f"pair {self.id}: unknown direction {self.ground_truth!r}")

    def swapped(self):
        flip = {FORWARD: BACKWARD, BACKWARD: FORWARD, UNKNOWN: UNKNOWN}[self.ground_truth]
        return CausalPair(self.id, self.y, self.x, flip, dict(self.meta))


@dataclass
class CausalScore:
    id: str
    hsic_forward: float
    hsic_backward: float
    score: float
    decided: str
    truth: str = UNKNOWN
    n_used: int = 0
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)

    @property
    def correct(self):
        return self.decided != UNKNOWN and self.decided == self.truth


@dataclass(frozen=True)
class ScoringConfig:
    subsample: int = 1000
    seed: int = 0
    restarts: int = 2
    max_iterations: int = 500
    relative_tolerance: float = 1e-6
    n_steps: int = 5
    include_identity: bool = True


def make_regressor(regressor, config):
    """Estimator for ``"gp"``/``"wgp"``, or a clone of a given estimator."""
    from .gp import GPRegressor
    from .wgp import WarpedGPRegressor

    common = dict(
        restarts=config.restarts,
        max_iter=config.max_iterations,
        tol=config.relative_tolerance,
        random_state=config.seed,
    )
    if regressor == "gp":
        return GPRegressor(**common)
    if regressor == "wgp":
        return WarpedGPRegressor(n_steps=config.n_steps, include_identity=config.include_identity, **common)
    if isinstance(regressor, str):
        raise InvalidInputError(f"unknown regressor {regressor!r}")
    return clone(regressor)


def _standardize(v):
    sd = v.std()
    return (v - v.mean()) / (sd if sd > 0 else 1.0)


def _residual_dependence(cause, effect, regressor, config, direction):
    model = make_regressor(regressor, config)
    try:
        model.fit(cause[:, None], effect)
        resid = effect - model.predict(cause[:, None])
    except (NumericalFailure, np.linalg.LinAlgError, ValueError) as exc:
        raise ScoringFailure(f"{direction} regression failed: {exc}", direction) from exc
    return hsic.hsic_statistic(cause, resid).statistic


def score_pair(pair, regressor="gp", config=None):
    """Fit both regression directions and compare residual independence."""
    config = config or ScoringConfig()
    n = pair.x.size
    if n < MIN_PAIR_SIZE:
        raise InvalidInputError(f"pair {pair.id}: need at least {MIN_PAIR_SIZE} samples, got {n}")
    x, y = pair.x, pair.y
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError(f"pair {pair.id}: non-finite values")
    if n > config.subsample:
        idx = np.sort(np.random.default_rng(config.seed).choice(n, config.subsample, replace=False))
        x, y = x[idx], y[idx]
    x, y = _standardize(x), _standardize(y)
    h_f = _residual_dependence(x, y, regressor, config, FORWARD)
    h_b = _residual_dependence(y, x, regressor, config, BACKWARD)
    score = h_f - h_b
    decided = FORWARD if score < 0 else BACKWARD if score > 0 else UNKNOWN
    return CausalScore(pair.id, h_f, h_b, score, decided, pair.ground_truth, x.size)


@dataclass
class CollectionResult:
    scores: list
    ranking: list  # indices into scores, most confident first

    @property
    def failures(self):
        return [s for s in self.scores if s.failed]


def score_collection(pairs, regressor="gp", config=None):
    """Score every pair; failures are kept as rows with ``error`` set."""
    scores = []
    for pair in pairs:
        try:
            scores.append(score_pair(pair, regressor, config))
        except (ScoringFailure, InvalidInputError) as exc:
            scores.append(
                CausalScore(pair.id, np.nan, np.nan, np.nan, UNKNOWN, pair.ground_truth, pair.x.size, str(exc))
            )
    conf = [abs(s.score) if not s.failed else -np.inf for s in scores]
    ranking = sorted(range(len(scores)), key=lambda i: (-conf[i], i))
    return CollectionResult(scores, ranking)


def roc_inputs(scores, convention="direction"):
    """Binary labels and confidences for ROC analysis over scored pairs.

    ``direction``: label is ``truth == '->'`` and confidence is ``-score``
    (how strongly ``x -> y`` is preferred). ``correctness``: label is whether
    the decision was right and confidence is ``|score|``. Pairs without ground
    truth or with failed scoring are skipped.
    """
    usable = [s for s in scores if not s.failed and s.truth != UNKNOWN]
    if convention == "direction":
        labels = np.array([s.truth == FORWARD for s in usable], dtype=int)
        conf = np.array([-s.score for s in usable], dtype=float)
    elif convention == "correctness":
        labels = np.array([s.correct for s in usable], dtype=int)
        conf = np.array([abs(s.score) for s in usable], dtype=float)
    else:
        raise InvalidInputError(f"unknown ROC convention {convention!r}")
    return labels, conf


def load_pair_directory(path):
    """Read a directory of two-column pair files plus direction metadata.

    Pair files are named ``pairNNNN.txt`` with whitespace- or comma-separated
    columns. Directions come from ``pairmeta.txt`` (cause/effect column
    ranges, one line per pair) when present, otherwise from a
    ``metadata.csv`` with ``id,direction`` rows. Pairs without metadata get
    an unknown direction.
    """
    if not os.path.isdir(path):
        raise InvalidInputError(f"not a directory: {path}")
    truth = _read_metadata(path)
    pairs = []
    for name in sorted(os.listdir(path)):
        if not (name.startswith("pair") and name.endswith(".txt")) or name == "pairmeta.txt":
            continue
        pid = name[4:-4]
        if "_des" in pid:
            continue
        data = _read_columns(os.path.join(path, name))
        if data.shape[1] != 2:
            raise InvalidInputError(f"{name}: expected 2 columns, found {data.shape[1]}")
        pairs.append(CausalPair(pid, data[:, 0], data[:, 1], truth.get(pid, UNKNOWN), {"file": name}))
    return pairs


def _read_columns(path):
    with open(path) as fh:
        rows = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(t) for t in line.replace(",", " ").split()])
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError(f"{path}: ragged or empty pair file")
    return arr[np.all(np.isfinite(arr), axis=1)]


def _read_metadata(path):
    truth = {}
    meta = os.path.join(path, "pairmeta.txt")
    if os.path.exists(meta):
        with open(meta) as fh:
            for line in fh:
                parts = line.split()
                if len(parts) < 5:
                    continue
                cause_start = int(parts[1])
                truth[parts[0]] = FORWARD if cause_start == 1 else BACKWARD
        return truth
    simple = os.path.join(path, "metadata.csv")
    if os.path.exists(simple):
        with open(simple, newline="") as fh:
            for row in csv.reader(fh):
                if len(row) >= 2 and row[0] != "id":
                    truth[row[0].strip()] = row[1].strip()
    return truth


def write_pair_directory(pairs, path):
    """Write pairs in the layout read by :func:`load_pair_directory`."""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "pairmeta.txt"), "w") as meta:
        for p in pairs:
            np.savetxt(os.path.join(path, f"pair{p.id}.txt"), np.column_stack([p.x, p.y]), fmt="%.17g")
            cause, effect = (1, 2) if p.ground_truth != BACKWARD else (2, 1)
            meta.write(f"{p.id} {cause} {cause} {effect} {effect} 1\n")
