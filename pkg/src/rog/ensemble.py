"""Per-layer generative classifiers combined into one posterior.

The final posterior is sum_l alpha_l P(y | f_l(x)) with alpha on the
probability simplex. Weights are fitted by minimizing validation NLL with
exponentiated-gradient (mirror) descent from the uniform point; the
validation set is first filtered down to the rows closest to their own class
mean under the deepest layer's MCD parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import GaussianClassifierParams, make_params, posterior
from .data import FeatureSet
from .errors import ConfigError, DegenerateError, DimensionError, SpecError
from .estimators import McdConfig, mahalanobis, mcd_estimate


@dataclass(frozen=True)
class LayeredFeatureSet:
    """Per-layer feature sets sharing one label vector."""

    layers: list[FeatureSet]

    def __post_init__(self):
        if not self.layers:
            raise SpecError("need at least one layer")
        first = self.layers[0]
        for i, layer in enumerate(self.layers[1:], start=1):
            if layer.n != first.n:
                raise DimensionError(f"layer {i} has N={layer.n}, expected {first.n}")
            if not np.array_equal(layer.labels, first.labels):
                raise DimensionError(f"layer {i} labels differ from layer 0")
            if layer.num_classes != first.num_classes:
                raise DimensionError(f"layer {i} num_classes differs")

    @property
    def n(self) -> int:
        return self.layers[0].n

    @property
    def labels(self) -> np.ndarray:
        return self.layers[0].labels

    @property
    def num_classes(self) -> int:
        return self.layers[0].num_classes

    def __len__(self) -> int:
        return len(self.layers)

    def take(self, rows: np.ndarray) -> "LayeredFeatureSet":
        return LayeredFeatureSet([layer.take(rows) for layer in self.layers])


@dataclass(frozen=True)
class EnsembleModel:
    """Ordered per-layer classifier parameters plus simplex weights."""

    layer_ids: list[str]
    layer_params: list[GaussianClassifierParams]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(self.layer_params) < 1:
            raise SpecError("ensemble needs at least one layer")
        if w.shape != (len(self.layer_params),):
            raise DimensionError("weights length must match layer count")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise SpecError("weights must be non-negative and sum to 1")

    @property
    def num_classes(self) -> int:
        return self.layer_params[0].num_classes


def filter_validation(
    val: FeatureSet,
    params: GaussianClassifierParams,
    keep: int,
) -> tuple[FeatureSet, np.ndarray]:
    """Keep the rows closest to their own labeled class mean.

    Distance is the squared Mahalanobis distance under the given tied
    covariance; ties break by row index. Returns the filtered set and the
    (sorted) retained row indices so sibling layers can be filtered alike.
    """
    if keep > val.n:
        raise SpecError(f"keep={keep} exceeds N_val={val.n}")
    dist = np.empty(val.n)
    for c in range(val.num_classes):
        rows = val.class_indices(c)
        if rows.size:
            dist[rows] = mahalanobis(
                val.features[rows], params.means[c], params.covariance
            )
    order = np.argsort(dist, kind="stable")[:keep]
    rows = np.sort(order)
    return val.take(rows), rows


def _true_label_probs(
    layer_params: list[GaussianClassifierParams], val: LayeredFeatureSet
) -> np.ndarray:
    """N x L matrix of per-layer posterior mass on the true label."""
    n = val.n
    probs = np.empty((n, len(layer_params)))
    idx = np.arange(n)
    for l, (params, layer) in enumerate(zip(layer_params, val.layers)):
        post = posterior(params, layer.features)
        probs[:, l] = post[idx, layer.labels]
    return probs


def nll_of_weights(probs: np.ndarray, alpha: np.ndarray) -> float:
    mix = probs @ alpha
    if np.any(mix <= 0):
        raise DegenerateError("zero mixture likelihood; posteriors must be > 0")
    return float(-np.mean(np.log(mix)))


def fit_weights(
    layer_params: list[GaussianClassifierParams],
    val: LayeredFeatureSet,
    step: float = 0.5,
    iters: int = 500,
) -> tuple[np.ndarray, float]:
    """Minimize validation NLL over the simplex by exponentiated gradient.

    Deterministic: starts at the uniform weights and runs a fixed budget.
    Returns (alpha, final NLL).
    """
    if len(layer_params) != len(val):
        raise ConfigError("layer_params and validation layer count differ")
    L = len(layer_params)
    probs = _true_label_probs(layer_params, val)
    alpha = np.full(L, 1.0 / L)
    best_alpha, best_nll = alpha.copy(), nll_of_weights(probs, alpha)
    for _ in range(iters):
        mix = probs @ alpha
        if np.any(mix <= 0):
            raise DegenerateError("zero mixture likelihood during weight fit")
        grad = -np.mean(probs / mix[:, None], axis=0)
        alpha = alpha * np.exp(-step * (grad - grad.max()))
        alpha /= alpha.sum()
        nll = nll_of_weights(probs, alpha)
        if nll < best_nll:
            best_alpha, best_nll = alpha.copy(), nll
    return best_alpha, best_nll


def ensemble_posterior(model: EnsembleModel, xs: list[np.ndarray]) -> np.ndarray:
    """Convex combination of per-layer posteriors.

    xs holds one vector (or batch) per layer, in model layer order.
    """
    if len(xs) != len(model.layer_params):
        raise DimensionError("need one feature array per layer")
    total = None
    for w, params, x in zip(model.weights, model.layer_params, xs):
        p = posterior(params, x)
        total = w * p if total is None else total + w * p
    return total


def predict_ensemble(
    model: EnsembleModel, layers: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    probs = np.atleast_2d(ensemble_posterior(model, layers))
    return np.argmax(probs, axis=1), probs


def build_rog(
    train: LayeredFeatureSet,
    val: LayeredFeatureSet | None,
    cfg: McdConfig | None = None,
    keep: int | None = None,
    seed: int = 0,
    layer_ids: list[str] | None = None,
) -> EnsembleModel:
    """End-to-end robust generative ensemble.

    Per layer: MCD-fit the class means and tied covariance. The validation
    set is filtered by the deepest (last) layer's MCD parameters, then the
    ensemble weights are fitted on the survivors; without a validation set
    the weights stay uniform.
    """
    cfg = cfg or McdConfig()
    layer_ids = layer_ids or [f"layer{l}" for l in range(len(train))]
    layer_params = []
    for l, layer in enumerate(train.layers):
        fit, tied, priors = mcd_estimate(layer, cfg, seed=seed + 1000 * l)
        means = np.vstack([f.stats.mean for f in fit.class_fits])
        layer_params.append(make_params(means, tied, priors, kind="tied"))

    if val is None or len(train) == 1:
        weights = np.full(len(train), 1.0 / len(train))
    else:
        if keep is not None:
            _, rows = filter_validation(val.layers[-1], layer_params[-1], keep)
            val = val.take(rows)
        weights, _ = fit_weights(layer_params, val)
    return EnsembleModel(layer_ids=layer_ids, layer_params=layer_params,
                         weights=weights)


def save_ensemble(model: EnsembleModel, directory: str | Path) -> Path:
    """Write the ensemble as a JSON bundle referencing per-layer param files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    refs = []
    for layer_id, params in zip(model.layer_ids, model.layer_params):
        fname = f"{layer_id}.json"
        (directory / fname).write_text(params.to_json())
        refs.append({"layer_id": layer_id, "params": fname})
    bundle = directory / "ensemble.json"
    bundle.write_text(
        json.dumps({"layers": refs, "weights": model.weights.tolist()}, indent=2)
    )
    return bundle


def load_ensemble(bundle_path: str | Path) -> EnsembleModel:
    bundle_path = Path(bundle_path)
    if bundle_path.is_dir():
        bundle_path = bundle_path / "ensemble.json"
    obj = json.loads(bundle_path.read_text())
    layer_ids = [ref["layer_id"] for ref in obj["layers"]]
    layer_params = [
        GaussianClassifierParams.from_json(
            (bundle_path.parent / ref["params"]).read_text()
        )
        for ref in obj["layers"]
    ]
    return EnsembleModel(
        layer_ids=layer_ids,
        layer_params=layer_params,
        weights=np.array(obj["weights"]),
    )
