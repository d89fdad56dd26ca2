"""Dataset loading, target transforms and synthetic generators."""

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import kernel, warp
from .causal import CausalPair
from .exceptions import DomainError, EmptyDatasetError, InvalidInputError, SchemaError
from .kernel import KernelParams
from .warp import WarpParams

SEABAM_BANDS = ("412", "443", "490", "510", "555")


@dataclass
class Dataset:
    features: np.ndarray
    target: np.ndarray
    feature_names: list
    target_name: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.target = np.asarray(self.target, dtype=float).ravel()
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        if self.features.shape[0] != self.target.size:
            raise InvalidInputError("features and target have different lengths")
        if self.target.size < 1:
            raise EmptyDatasetError("dataset has no rows")
        self.provenance.setdefault("transforms", [])

    def __len__(self):
        return self.target.size

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def transforms(self):
        return self.provenance["transforms"]

    def subset(self, idx):
        return replace(self, features=self.features[idx], target=self.target[idx], provenance=dict(self.provenance))

    def inverse_target(self, values):
        """Undo the recorded target transforms, newest first."""
        v = np.asarray(values, dtype=float)
        for t in reversed(self.transforms):
            v = _inverse(t["name"], t.get("power"), v)
        return v


def load_csv(path, target, features=None):
    """Read a headered CSV; rows with missing or non-finite values are dropped.

    ``features`` defaults to every column except ``target``.
    """
    df = pd.read_csv(path)
    missing = [c for c in [target, *(features or [])] if c not in df.columns]
    if missing:
        raise SchemaError(f"column(s) not found in {path}: {', '.join(map(str, missing))}")
    features = list(features) if features else [c for c in df.columns if c != target]
    sub = df[features + [target]].apply(pd.to_numeric, errors="coerce")
    values = sub.to_numpy(dtype=float)
    keep = np.all(np.isfinite(values), axis=1)
    if not keep.any():
        raise EmptyDatasetError(f"no usable rows in {path}")
    return Dataset(
        features=values[keep, :-1],
        target=values[keep, -1],
        feature_names=features,
        target_name=target,
        provenance={"source": str(path), "dropped_rows": int((~keep).sum()), "transforms": []},
    )


def _forward(name, power, y):
    if name == "none":
        return y.copy()
    if name == "log":
        return np.log(y)
    if name == "log10":
        return np.log10(y)
    if name == "exp":
        return np.exp(y)
    if name == "power":
        return np.power(y, power)
    raise InvalidInputError(f"unknown transform {name!r}")


def _inverse(name, power, v):
    if name == "none":
        return v.copy()
    if name == "log":
        return np.exp(v)
    if name == "log10":
        return np.power(10.0, v)
    if name == "exp":
        return np.log(v)
    if name == "power":
        return np.power(v, 1.0 / power)
    raise InvalidInputError(f"unknown transform {name!r}")


def parse_transform(spec):
    """``"power(0.5)"`` -> ``("power", 0.5)``; other names pass through."""
    spec = spec.strip()
    if spec.startswith("power"):
        try:
            return "power", float(spec[spec.index("(") + 1 : spec.rindex(")")])
        except ValueError as exc:
            raise InvalidInputError(f"malformed power transform {spec!r}") from exc
    return spec, None


def apply_transform(dataset, transform, power=None):
    """Return a copy of ``dataset`` with the target transformed.

    ``transform`` is one of ``none``, ``log``, ``log10``, ``exp`` or
    ``power`` (with ``power`` given, or written as ``"power(p)"``).
    """
    if transform.startswith("power") and power is None:
        transform, power = parse_transform(transform)
    y = dataset.target
    if transform in ("log", "log10"):
        bad = np.flatnonzero(~(y > 0))
    elif transform == "power":
        if power is None or power == 0:
            raise InvalidInputError("power transform needs a non-zero exponent")
        bad = np.flatnonzero(~(y >= 0)) if power > 0 else np.flatnonzero(~(y > 0))
    else:
        bad = np.array([], dtype=int)
    if bad.size:
        raise DomainError(f"{transform} transform undefined for {bad.size} target value(s)", rows=bad.tolist())
    with np.errstate(over="ignore"):
        new = _forward(transform, power, y)
    if not np.all(np.isfinite(new)):
        rows = np.flatnonzero(~np.isfinite(new)).tolist()
        raise DomainError(f"{transform} transform overflowed", rows=rows)
    prov = dict(dataset.provenance)
    entry = {"name": transform}
    if transform == "power":
        entry["power"] = power
    prov["transforms"] = [*dataset.transforms, entry]
    return replace(dataset, target=new, provenance=prov)


# warp whose inverse generates the "tanh-steps" scenario
TANH_SCENARIO_WARP = WarpParams(a=[2.0, 1.0], b=[4.0, 6.0], c=[2.0, -3.0])


def synth_warped_gp(
    n,
    seed=0,
    scenario="exponential",
    signal_variance=1.0,
    lengthscale=0.2,
    noise_std=0.3,
):
    """Draw a 1-D GP sample, add noise and push it through an inverse warp.

    Scenarios: ``exponential`` (``y = exp(f + e)``), ``tanh-steps`` (inverse
    of a fixed tanh warp) and ``identity`` (``y = f + e``). The generative
    quantities are kept in ``provenance["generative"]``.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    params = KernelParams(signal_variance, [lengthscale])
    K = kernel.cross(params, x[:, None], x[:, None])
    _, L, _ = kernel.cholesky_with_jitter(K, start=1e-8)
    f = L @ rng.standard_normal(n)
    latent = f + noise_std * rng.standard_normal(n)
    if scenario == "exponential":
        y = np.exp(latent)
    elif scenario == "tanh-steps":
        y = warp.inverse(TANH_SCENARIO_WARP, latent)
    elif scenario == "identity":
        y = latent
    else:
        raise InvalidInputError(f"unknown scenario {scenario!r}")
    record = {
        "scenario": scenario,
        "seed": seed,
        "signal_variance": signal_variance,
        "lengthscale": lengthscale,
        "noise_std": noise_std,
        "f": f,
    }
    return Dataset(
        features=x[:, None],
        target=y,
        feature_names=["x"],
        target_name="y",
        provenance={"source": f"synth_warped_gp:{scenario}", "generative": record, "transforms": []},
    )


def _mechanism(kind, rng):
    if kind == "cubic":
        c = rng.uniform(0.5, 1.5)
        return lambda u: c * u**3 - u
    if kind == "exp-decay":
        c = rng.uniform(0.5, 1.5)
        return lambda u: np.exp(-c * u)
    if kind == "sinusoid-plus-trend":
        w, s = rng.uniform(1.5, 3.0), rng.uniform(0.3, 1.0)
        return lambda u: np.sin(w * u) + s * u
    raise InvalidInputError(f"unknown mechanism {kind!r}")


MECHANISMS = ("cubic", "exp-decay", "sinusoid-plus-trend")


def synth_anm_pairs(count, n=300, seed=0, noise_std=0.2):
    """Additive-noise cause-effect pairs with randomized column order.

    Each cause is uniform or a two-component Gaussian mixture, standardized;
    the effect is a nonlinear mechanism of the cause plus independent
    Gaussian noise scaled to the mechanism's spread. Half of the pairs
    (at random) are stored with the effect in the ``x`` column.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        if rng.uniform() < 0.5:
            cause = rng.uniform(-2.0, 2.0, n)
            cause_kind = "uniform"
        else:
            comp = rng.uniform(size=n) < 0.5
            cause = np.where(comp, rng.normal(-1.0, 0.4, n), rng.normal(1.0, 0.6, n))
            cause_kind = "mixture"
        cause = (cause - cause.mean()) / cause.std()
        kind = MECHANISMS[i % len(MECHANISMS)]
        fx = _mechanism(kind, rng)(cause)
        effect = fx + noise_std * fx.std() * rng.standard_normal(n)
        if rng.uniform() < 0.5:
            pairs.append(CausalPair(f"{i + 1:04d}", cause, effect, "->", {"mechanism": kind, "cause": cause_kind}))
        else:
            pairs.append(CausalPair(f"{i + 1:04d}", effect, cause, "<-", {"mechanism": kind, "cause": cause_kind}))
    return pairs
