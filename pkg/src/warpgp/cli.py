"""Command-line entry point: ``warpgp {fit,eval,predict,causal,synth}``.

Every subcommand validates its configuration and loads all inputs before
computing anything, stages its outputs in a scratch directory and only moves
them into ``--out`` once everything succeeded, so a failure never leaves
partial results behind. Exit codes: 0 success, 2 usage error, 3 data error,
4 numerical failure; failures also print a one-line JSON record on stderr.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile

import numpy as np
import pandas as pd
from scipy import stats

from . import __version__, causal, data, evaluation, gp, wgp
from .exceptions import InvalidInputError, NumericalFailure, WarpGPError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# keys that may appear in a --config file, per subcommand
_MODEL_KEYS = ("model", "warp_L", "no_identity", "restarts", "max_iter", "tol", "point", "transform")
_KEYS = {
    "fit": ("data", "target", "features", "rate", "seed", *_MODEL_KEYS),
    "eval": ("data", "target", "features", "seed", "protocol", "rates", "repeats", "k", *_MODEL_KEYS),
    "predict": ("model_file", "data", "features", "quantiles", "threshold", "point"),
    "causal": ("pairs", "regressor", "subsample", "seed", "restarts", "max_iter", "tol", "warp_L", "no_identity", "roc_convention"),
    "synth": ("kind", "n", "count", "seed", "noise"),
}
# settings that do not change results and are left out of the config hash
_UNHASHED = ("out", "config", "command")


class UsageError(WarpGPError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _csv_names(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _model_flags(p, regressor=False):
    if not regressor:
        p.add_argument("--model", choices=("gp", "wgp"), default="wgp")
        p.add_argument("--point", choices=("median", "mean"), default="median")
        p.add_argument("--transform", default="none", help="target transform: none, log, log10, exp, power(p)")
    p.add_argument("--warp-L", dest="warp_L", type=int, default=5, help="number of tanh steps")
    p.add_argument("--no-identity", dest="no_identity", action="store_true", default=False)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)


def _data_flags(p, target=True):
    p.add_argument("--data", help="CSV file with a header row")
    if target:
        p.add_argument("--target", help="target column")
    p.add_argument("--features", type=_csv_names, help="comma-separated feature columns")


def build_parser():
    parser = _Parser(prog="warpgp", description="Warped Gaussian process regression and ANM causal scoring.")
    parser.add_argument("--version", action="version", version=f"warpgp {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="key=value or JSON file; flags given explicitly win")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fit", help="fit a model and export it")
    _data_flags(p)
    p.add_argument("--rate", type=float, help="train on a seeded floor(rate*n) split and score the rest")
    _model_flags(p)
    common(p)

    p = sub.add_parser("eval", help="resampled evaluation of a model family")
    _data_flags(p)
    p.add_argument("--protocol", choices=("rates", "kfold"), default="rates")
    p.add_argument("--rates", type=_csv_floats, default=[0.2, 0.5, 0.8])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--k", type=int, default=4)
    _model_flags(p)
    common(p)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model-file", dest="model_file", help="model.json written by fit")
    _data_flags(p, target=False)
    p.add_argument("--quantiles", type=_csv_floats, default=[0.025, 0.975])
    p.add_argument("--threshold", type=float, default=0.2, help="cv-ratio mask threshold")
    p.add_argument("--point", choices=("median", "mean"), default=None)
    common(p, seed=False)

    p = sub.add_parser("causal", help="score a directory of cause-effect pairs")
    p.add_argument("--pairs", help="pair directory")
    p.add_argument("--regressor", choices=("gp", "wgp"), default="gp")
    p.add_argument("--subsample", type=int, default=1000)
    p.add_argument("--roc-convention", dest="roc_convention", choices=("direction", "correctness"), default="direction")
    _model_flags(p, regressor=True)
    p.set_defaults(restarts=2)
    common(p)

    p = sub.add_parser("synth", help="write a synthetic dataset or pair directory")
    p.add_argument("--kind", choices=("exponential", "tanh-steps", "identity", "anm"), default="exponential")
    p.add_argument("--n", type=int, default=400, help="rows (per pair for anm)")
    p.add_argument("--count", type=int, default=50, help="number of pairs for anm")
    p.add_argument("--noise", type=float, default=None, help="noise standard deviation")
    common(p)
    return parser


def read_config(path):
    """Parse a JSON object or ``key=value`` lines (``#`` starts a comment)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed JSON config {path}: {exc}") from exc
        return {str(k).replace("-", "_"): v for k, v in cfg.items()}
    cfg = {}
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _coerce(parser, key, value):
    """Convert a config value with the same type as the matching flag."""
    action = next(a for a in parser._actions if a.dest == key)
    if isinstance(action, argparse._StoreTrueAction):
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes"):
            return True
        if str(value).lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"config key {key!r} expects a boolean")
    if isinstance(value, list) and action.type in (_csv_floats, _csv_names):
        value = ",".join(map(str, value))
    try:
        v = action.type(value) if action.type is not None and not isinstance(value, bool) else value
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"config key {key!r}: {exc}") from exc
    if action.choices is not None and v not in action.choices:
        raise UsageError(f"config key {key!r} must be one of {sorted(action.choices)}")
    return v


def resolve(argv):
    """Parse flags and merge them over an optional config file."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required: fit, eval, predict, causal or synth")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    explicit = _explicit_flags(sub, argv)
    settings = vars(args)
    if args.config:
        cfg = read_config(args.config)
        unknown = sorted(set(cfg) - set(_KEYS[args.command]))
        if unknown:
            raise UsageError(f"unknown config key(s) for {args.command}: {', '.join(unknown)}")
        for key, value in cfg.items():
            if key not in explicit:
                settings[key] = _coerce(sub, key, value)
    return settings


def _explicit_flags(sub, argv):
    """Destinations of the flags that appear literally in ``argv``."""
    tokens = {t.split("=", 1)[0] for t in argv if t.startswith("--")}
    return {a.dest for a in sub._actions if tokens.intersection(a.option_strings)}


def provenance(settings):
    hashed = {k: v for k, v in sorted(settings.items()) if k not in _UNHASHED}
    digest = hashlib.sha256(json.dumps(hashed, sort_keys=True, default=str).encode()).hexdigest()
    return {
        "tool": "warpgp",
        "version": __version__,
        "command": settings["command"],
        "seed": settings.get("seed"),
        "config_hash": digest,
        "config": hashed,
    }


def header_lines(prov):
    return [
        f"warpgp {prov['version']} {prov['command']}",
        f"seed={prov['seed']}",
        f"config_hash={prov['config_hash']}",
    ]


def _require(settings, *keys):
    missing = [k for k in keys if settings.get(k) in (None, "")]
    if missing:
        raise UsageError(f"{settings['command']}: missing required setting(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _estimator_params(settings):
    params = dict(
        restarts=settings["restarts"],
        max_iter=settings["max_iter"],
        tol=settings["tol"],
    )
    if settings["model"] == "wgp":
        params.update(
            n_steps=settings["warp_L"],
            include_identity=not settings["no_identity"],
            point_estimate=settings["point"],
        )
    return params


def _load_dataset(settings):
    if not os.path.isfile(settings["data"]):
        raise FileNotFoundError(f"data file not found: {settings['data']}")
    ds = data.load_csv(settings["data"], settings["target"], settings.get("features"))
    if settings.get("transform", "none") != "none":
        ds = data.apply_transform(ds, settings["transform"])
    return ds


def _check_model_settings(settings):
    if settings["restarts"] < 1 or settings["max_iter"] < 1 or not settings["tol"] > 0:
        raise UsageError("--restarts and --max-iter must be positive and --tol > 0")
    if settings["warp_L"] < 1:
        raise UsageError("--warp-L must be at least 1")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=False, allow_nan=True)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _restart_summary(info):
    if info is None:
        return []
    out = info.summary()
    for row, res in zip(out, info.restarts):
        if not isinstance(res, str):
            row["trace_length"] = len(res.trace)
    return out


def cmd_fit(settings, stage):
    _require(settings, "data", "target")
    _check_model_settings(settings)
    ds = _load_dataset(settings)
    prov = provenance(settings)
    n = len(ds)
    if settings.get("rate") is not None:
        n_train, _ = evaluation.split_sizes(n, settings["rate"])
        perm = np.random.default_rng(settings["seed"]).permutation(n)
        train, test = perm[:n_train], perm[n_train:]
    else:
        train, test = np.arange(n), np.array([], dtype=int)

    est = evaluation.make_estimator(settings["model"], random_state=settings["seed"], **_estimator_params(settings))
    est.fit(ds.features[train], ds.target[train])
    report = {
        "provenance": prov,
        "model": settings["model"],
        "n_train": int(train.size),
        "n_test": int(test.size),
        "log_likelihood": est.log_marginal_likelihood_value_,
        "kernel_params": est.kernel_params_.to_dict(),
    }
    if settings["model"] == "wgp":
        info = est.fit_info_
        report["warp_params"] = est.warp_params_.to_dict()
        report["gp_restarts"] = _restart_summary(info.gp_info)
        report["restarts"] = _restart_summary(info.warp_info)
        report["gp_only_log_likelihood"] = info.gp_only_value
        report["initial_log_likelihood"] = info.initial_value
    else:
        report["restarts"] = _restart_summary(est.fit_info_)
    if test.size:
        pred = est.predict(ds.features[test])
        truth = ds.target[test]
        if ds.transforms:
            pred, truth = ds.inverse_target(pred), ds.inverse_target(truth)
        report["test_metrics"] = evaluation.metrics(truth, pred).as_dict()

    model_prov = dict(prov, features=ds.feature_names, target=ds.target_name, transforms=ds.transforms)
    gp.save_model(est, os.path.join(stage, "model.json"), model_prov)
    _write_json(os.path.join(stage, "fit_report.json"), _jsonable(report))
    if settings["model"] == "wgp":
        est.warp_curve(path=os.path.join(stage, "warp_curve.csv"), header=header_lines(prov))


def cmd_eval(settings, stage):
    _require(settings, "data", "target")
    _check_model_settings(settings)
    if settings["repeats"] < 1:
        raise UsageError("--repeats must be at least 1")
    ds = _load_dataset(settings)
    prov = provenance(settings)
    params = _estimator_params(settings)
    model = settings["model"]
    reports, labels = [], []
    if settings["protocol"] == "rates":
        if not settings["rates"]:
            raise UsageError("--rates is empty")
        for rate in settings["rates"]:
            evaluation.split_sizes(len(ds), rate)  # validate every rate before fitting
        for rate in settings["rates"]:
            reports.append(
                evaluation.repeated_split_eval(ds, rate, settings["repeats"], model, settings["seed"], estimator_params=params)
            )
            labels.append(f"rate{rate:g}")
    else:
        reports.append(evaluation.kfold_eval(ds, settings["k"], model, settings["seed"], estimator_params=params))
        labels.append(f"kfold{settings['k']}")

    header = header_lines(prov)
    for label, rep in zip(labels, reports):
        evaluation.write_report_csv(rep, os.path.join(stage, f"eval_{model}_{label}.csv"), header)
    with open(os.path.join(stage, f"eval_{model}_summary.csv"), "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["setting", *[f"{k}_{s}" for k in evaluation.METRIC_NAMES for s in ("mean", "std")]])
        for label, rep in zip(labels, reports):
            m, s = rep.mean, rep.std
            w.writerow([label, *[repr(v) for k in evaluation.METRIC_NAMES for v in (m[k], s[k])]])
    evaluation.write_report_json(reports, os.path.join(stage, f"eval_{model}.json"), prov)


def _read_features(path, names):
    df = pd.read_csv(path)
    missing = [c for c in names if c not in df.columns]
    if missing:
        raise data.SchemaError(f"column(s) not found in {path}: {', '.join(missing)}")
    return df[names].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)


def _gaussian_outputs(dist, quantiles):
    z = stats.norm.ppf(quantiles)
    mean, std = dist.mean, dist.std
    return mean, mean, std, [mean + std * zq for zq in z]


def cmd_predict(settings, stage):
    _require(settings, "model_file", "data")
    qs = list(settings["quantiles"])
    if not qs or not all(0 < q < 1 for q in qs):
        raise UsageError("--quantiles must lie strictly between 0 and 1")
    if not settings["threshold"] > 0:
        raise UsageError("--threshold must be positive")
    for path in (settings["model_file"], settings["data"]):
        if not os.path.isfile(path):
            raise FileNotFoundError(f"file not found: {path}")
    with open(settings["model_file"]) as fh:
        stored = json.load(fh)
    est = gp.load_model(settings["model_file"])
    names = settings.get("features") or stored.get("provenance", {}).get("features")
    if not names:
        raise UsageError("--features is required for models saved without feature names")
    X = _read_features(settings["data"], names)
    if X.shape[1] != est.n_features_in_:
        raise InvalidInputError(f"model expects {est.n_features_in_} features, got {X.shape[1]}")
    prov = provenance(settings)

    n = X.shape[0]
    ok = np.all(np.isfinite(X), axis=1)
    point = np.full(n, np.nan)
    mean = np.full(n, np.nan)
    std = np.full(n, np.nan)
    qv = [np.full(n, np.nan) for _ in qs]
    if ok.any():
        dist = est.predictive(X[ok])
        if isinstance(dist, wgp.WarpedPredictive):
            kind = settings.get("point") or est.point_estimate
            m = dist.mean()
            p = dist.median() if kind == "median" else m
            s = dist.std()
            qq = [dist.quantile(q) for q in qs]
        else:
            p, m, s, qq = _gaussian_outputs(dist, np.array(qs))
        point[ok], mean[ok], std[ok] = p, m, s
        for dst, src in zip(qv, qq):
            dst[ok] = src
    ratio, mask, _ = evaluation.cv_ratio_mask(np.where(ok, mean, 1.0), np.where(ok, std, np.inf), settings["threshold"])
    ratio[~ok] = np.nan

    transforms = stored.get("provenance", {}).get("transforms") or []
    path = os.path.join(stage, "predictions.csv")
    with open(path, "w", newline="") as fh:
        for line in header_lines(prov):
            fh.write(f"# {line}\n")
        fh.write(f"# threshold={settings['threshold']!r}\n")
        if transforms:
            fh.write(f"# values are in transformed target units: {json.dumps(transforms)}\n")
        w = csv.writer(fh)
        w.writerow(["row", "point", "mean", "std", *[f"q{q:g}" for q in qs], "cv_ratio", "mask"])
        for i in range(n):
            vals = [point[i], mean[i], std[i], *[v[i] for v in qv], ratio[i]]
            w.writerow([i, *[repr(float(v)) for v in vals], int(mask[i])])


def cmd_causal(settings, stage):
    _require(settings, "pairs")
    if settings["subsample"] < causal.MIN_PAIR_SIZE:
        raise UsageError(f"--subsample must be at least {causal.MIN_PAIR_SIZE}")
    if settings["restarts"] < 1 or settings["max_iter"] < 1 or not settings["tol"] > 0:
        raise UsageError("--restarts and --max-iter must be positive and --tol > 0")
    if not os.path.isdir(settings["pairs"]):
        raise FileNotFoundError(f"pair directory not found: {settings['pairs']}")
    pairs = causal.load_pair_directory(settings["pairs"])
    if not pairs:
        raise data.EmptyDatasetError(f"no pair files in {settings['pairs']}")
    prov = provenance(settings)
    config = causal.ScoringConfig(
        subsample=settings["subsample"],
        seed=settings["seed"],
        restarts=settings["restarts"],
        max_iterations=settings["max_iter"],
        relative_tolerance=settings["tol"],
        n_steps=settings["warp_L"],
        include_identity=not settings["no_identity"],
    )
    reg = settings["regressor"]
    result = causal.score_collection(pairs, reg, config)
    labels, conf = causal.roc_inputs(result.scores, settings["roc_convention"])
    if labels.size:
        points, auc = evaluation.roc_auc(labels, conf)
    else:
        points, auc = np.zeros((1, 2)), math.nan
    rank = {idx: r + 1 for r, idx in enumerate(result.ranking)}

    header = header_lines(prov)
    with open(os.path.join(stage, f"scores_{reg}.csv"), "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["id", "hsic_forward", "hsic_backward", "score", "decided", "truth", "rank", "n_used", "error"])
        for i, s in enumerate(result.scores):
            w.writerow(
                [s.id, repr(float(s.hsic_forward)), repr(float(s.hsic_backward)), repr(float(s.score)),
                 s.decided, s.truth, rank[i], s.n_used, s.error]
            )
    evaluation.write_roc_csv(points, os.path.join(stage, f"roc_{reg}.csv"), header)
    usable = [s for s in result.scores if not s.failed and s.truth != causal.UNKNOWN]
    _write_json(
        os.path.join(stage, f"auc_{reg}.json"),
        {
            "provenance": prov,
            "regressor": reg,
            "convention": settings["roc_convention"],
            "auc": auc,
            "n_pairs": len(result.scores),
            "n_scored": len(usable),
            "n_failed": len(result.failures),
            "accuracy": float(np.mean([s.correct for s in usable])) if usable else math.nan,
        },
    )


def cmd_synth(settings, stage):
    if settings["n"] < 2 or settings["count"] < 0:
        raise UsageError("--n must be at least 2 and --count non-negative")
    prov = provenance(settings)
    if settings["kind"] == "anm":
        kw = {} if settings["noise"] is None else {"noise_std": settings["noise"]}
        pairs = data.synth_anm_pairs(settings["count"], settings["n"], settings["seed"], **kw)
        causal.write_pair_directory(pairs, os.path.join(stage, "pairs"))
        _write_json(os.path.join(stage, "synth.json"), {"provenance": prov, "pairs": [p.id for p in pairs]})
        return
    kw = {} if settings["noise"] is None else {"noise_std": settings["noise"]}
    ds = data.synth_warped_gp(settings["n"], settings["seed"], settings["kind"], **kw)
    with open(os.path.join(stage, "data.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in zip(ds.features[:, 0], ds.target):
            w.writerow([repr(float(x)), repr(float(y))])
    record = {k: v for k, v in ds.provenance["generative"].items() if k != "f"}
    record["f"] = ds.provenance["generative"]["f"].tolist()
    _write_json(os.path.join(stage, "synth.json"), {"provenance": prov, "generative": record})


COMMANDS = {"fit": cmd_fit, "eval": cmd_eval, "predict": cmd_predict, "causal": cmd_causal, "synth": cmd_synth}


def _publish(stage, out):
    os.makedirs(out, exist_ok=True)
    for name in sorted(os.listdir(stage)):
        dst = os.path.join(out, name)
        if os.path.isdir(dst) and not os.path.islink(dst):
            shutil.rmtree(dst)
        shutil.move(os.path.join(stage, name), dst)


def _fail(code, exc):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    rows = getattr(exc, "rows", None)
    if rows:
        record["rows"] = rows
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        settings = resolve(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    stage = tempfile.mkdtemp(prefix="warpgp-")
    try:
        COMMANDS[settings["command"]](settings, stage)
        _publish(stage, settings["out"])
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except NumericalFailure as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (InvalidInputError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(EXIT_DATA, exc)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
