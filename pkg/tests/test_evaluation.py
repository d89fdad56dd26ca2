import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from warpgp import evaluation
from warpgp.data import Dataset, apply_transform
from warpgp.exceptions import InvalidInputError


def pair_count_auc(labels, conf):
    """Concordance probability counted over positive/negative pairs."""
    pos = [c for l, c in zip(labels, conf) if l == 1]
    neg = [c for l, c in zip(labels, conf) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def test_perfect_prediction():
    m = evaluation.metrics([1.0, 2.0, 5.0], [1.0, 2.0, 5.0])
    assert (m.me, m.rmse, m.mae, m.r, m.r2) == (0.0, 0.0, 0.0, 1.0, 1.0)


def test_hand_fixture():
    m = evaluation.metrics([1, 2, 3], [2, 2, 2])
    assert m.me == 0.0
    assert m.rmse == pytest.approx(math.sqrt(2 / 3), abs=1e-12)
    assert m.mae == pytest.approx(2 / 3, abs=1e-12)
    assert m.r2 == pytest.approx(0.0, abs=1e-12)
    assert math.isnan(m.r) and not m.r_defined


def test_constant_offset():
    y = np.array([0.5, 1.5, -2.0, 4.0])
    m = evaluation.metrics(y, y + 0.75)
    assert m.me == pytest.approx(0.75, abs=1e-12)
    assert m.rmse == pytest.approx(0.75, abs=1e-12)
    assert m.r == pytest.approx(1.0, abs=1e-12)


def test_zero_variance_truth():
    m = evaluation.metrics([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert math.isnan(m.r) and math.isnan(m.r2) and not m.r_defined


def test_metric_validation():
    with pytest.raises(InvalidInputError):
        evaluation.metrics([], [])
    single = evaluation.metrics([1.0], [1.5])
    assert single.rmse == 0.5 and not single.r_defined
    with pytest.raises(InvalidInputError):
        evaluation.metrics([1.0, 2.0], [1.0])


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=30), st.randoms())
def test_metric_properties(rows, rnd):
    t = np.array([r[0] for r in rows])
    p = np.array([r[1] for r in rows])
    m = evaluation.metrics(t, p)
    assert m.rmse >= m.mae - 1e-9 and m.mae >= 0
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    m2 = evaluation.metrics(t[perm], p[perm])
    assert m2.rmse == pytest.approx(m.rmse, rel=1e-12, abs=1e-12)
    assert m2.mae == pytest.approx(m.mae, rel=1e-12, abs=1e-12)


def test_split_floor_rule():
    assert evaluation.split_sizes(919, 0.8) == (735, 184)
    assert evaluation.split_sizes(919, 0.2) == (183, 736)
    with pytest.raises(InvalidInputError):
        evaluation.split_sizes(10, 1.0)
    with pytest.raises(InvalidInputError):
        evaluation.split_sizes(5, 0.1)


def test_kfold_sizes_and_partition():
    folds = evaluation.kfold_indices(135, 4, seed=0)
    assert [f.size for f in folds] == [34, 34, 34, 33]
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(135))
    with pytest.raises(InvalidInputError):
        evaluation.kfold_indices(5, 6)


@given(st.integers(2, 200), st.integers(2, 20), st.integers(0, 1000))
def test_kfold_property(n, k, seed):
    if k > n:
        return
    folds = evaluation.kfold_indices(n, k, seed)
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))


def _linear_dataset(n=40):
    r = np.random.default_rng(0)
    X = r.uniform(0, 1, (n, 2))
    return Dataset(X, 1.0 + X[:, 0] + 2 * X[:, 1] + 0.05 * r.normal(size=n), ["a", "b"], "y")


def test_repeated_split_eval():
    ds = _linear_dataset()
    rep = evaluation.repeated_split_eval(ds, 0.5, repeats=2, model="gp", estimator_params={"restarts": 1})
    assert rep.train_sizes == [20, 20] and rep.test_sizes == [20, 20]
    assert rep.mean["rmse"] < 0.3
    again = evaluation.repeated_split_eval(ds, 0.5, repeats=2, model="gp", estimator_params={"restarts": 1})
    assert rep.to_dict() == again.to_dict()
    one = evaluation.repeated_split_eval(ds, 0.5, repeats=1, model="gp", estimator_params={"restarts": 1})
    assert all(v == 0.0 for v in one.std.values())
    assert set(one.formatted()) == set(evaluation.METRIC_NAMES)


def test_leave_one_out_runs():
    ds = _linear_dataset(8)
    rep = evaluation.kfold_eval(ds, k=8, model="gp", estimator_params={"restarts": 1})
    assert rep.test_sizes == [1] * 8 and len(rep.runs) == 8
    assert np.isfinite(rep.mean["rmse"]) and math.isnan(rep.mean["r"])


def test_original_units_reporting():
    ds = _linear_dataset()
    logged = apply_transform(ds, "log")
    rep = evaluation.kfold_eval(logged, k=4, model="gp", estimator_params={"restarts": 1})
    raw = evaluation.kfold_eval(logged, k=4, model="gp", original_units=False, estimator_params={"restarts": 1})
    assert rep.mean["rmse"] != raw.mean["rmse"]
    assert rep.mean["rmse"] < 0.3


def test_unknown_model():
    with pytest.raises(InvalidInputError):
        evaluation.make_estimator("svm")


def test_population_std():
    runs = [evaluation.MetricReport(0, v, 0, 0, 0) for v in (1.0, 3.0)]
    rep = evaluation.EvalReport("x", runs, [1, 1], [1, 1], [0, 1])
    assert rep.std["rmse"] == 1.0 and rep.mean["rmse"] == 2.0


def test_roc_fixtures():
    pts, auc = evaluation.roc_auc([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1])
    assert auc == pytest.approx(0.75, abs=1e-12)
    assert pts[0].tolist() == [0.0, 0.0] and pts[-1].tolist() == [1.0, 1.0]
    assert evaluation.roc_auc([1, 1, 0, 0], [4, 3, 2, 1])[1] == 1.0
    pts, auc = evaluation.roc_auc([1, 0, 1, 0], [0.5] * 4)
    assert auc == 0.5 and pts.shape == (2, 2)
    assert math.isnan(evaluation.roc_auc([1, 1], [0.2, 0.3])[1])
    with pytest.raises(InvalidInputError):
        evaluation.roc_auc([1, 2], [0.1, 0.2])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 6)), min_size=2, max_size=50))
def test_roc_matches_pair_counting(rows):
    labels = [r[0] for r in rows]
    conf = [r[1] / 3.0 for r in rows]  # coarse values force ties
    if len(set(labels)) < 2:
        return
    _, auc = evaluation.roc_auc(labels, conf)
    assert abs(auc - pair_count_auc(labels, conf)) <= 1e-12


def test_cv_ratio_fixtures():
    ratios, mask, frac = evaluation.cv_ratio_mask([10, 10], [1, 3], 0.2)
    np.testing.assert_allclose(ratios, [0.1, 0.3], rtol=1e-15)
    assert mask.tolist() == [True, False] and frac == 0.5
    assert evaluation.cv_ratio_mask([1, -2, 3], [0, 0, 0], 0.01)[2] == 1.0
    assert evaluation.cv_ratio_mask([1, 2], [0.1, 0.1], 0.0)[2] == 0.0
    r, m, _ = evaluation.cv_ratio_mask([0.0], [1.0])
    assert r[0] == np.inf and not m[0]


def test_report_writers(tmp_path):
    runs = [evaluation.metrics([1, 2, 3], [1, 2, 4])]
    rep = evaluation.EvalReport("rates", runs, [3], [3], [7], {"rate": 0.5})
    evaluation.write_report_csv(rep, tmp_path / "r.csv", ["h"])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "# h" and lines[1].startswith("row,seed") and len(lines) == 5
    evaluation.write_report_json([rep], tmp_path / "r.json", {"p": 1})
    evaluation.write_roc_csv(np.array([[0.0, 0.0], [1.0, 1.0]]), tmp_path / "roc.csv")
    assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "fpr,tpr"
