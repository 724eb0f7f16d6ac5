"""Posterior computation and prediction.

The generative classifier is linear-discriminant form: class-conditional
Gaussians with one tied covariance and class priors, giving linear logits

    logit_c(x) = mu_c' S^-1 x - 1/2 mu_c' S^-1 mu_c + log beta_c

normalized by a max-shifted log-sum-exp. An identity-covariance variant
reduces this to the nearest-mean rule with prior offsets, and a multinomial
logistic baseline stands in for a pre-trained softmax head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg as sla
from scipy.special import logsumexp, softmax

from .data import FeatureSet
from .errors import ValidationError
from .estimators import effective_ridge, _chol_logdet

CovarianceKind = str  # "tied" | "identity"


@dataclass(frozen=True)
class GaussianClassifierParams:
    """Means, tied covariance (with cached precision), and log priors."""

    means: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    log_priors: np.ndarray
    kind: CovarianceKind = "tied"

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "means": self.means.tolist(),
                "covariance": self.covariance.tolist(),
                "priors": np.exp(self.log_priors).tolist(),
                "kind": self.kind,
            }
        )

    @staticmethod
    def from_json(text: str) -> "GaussianClassifierParams":
        obj = json.loads(text)
        return make_params(
            np.array(obj["means"]),
            np.array(obj["covariance"]),
            np.array(obj["priors"]),
            kind=obj["kind"],
        )


@dataclass(frozen=True)
class SoftmaxParams:
    """Weights and biases of a plain softmax head."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValidationError("softmax parameters must be finite")


def make_params(
    means: np.ndarray,
    covariance: np.ndarray,
    priors: np.ndarray,
    kind: CovarianceKind = "tied",
    ridge: float | None = None,
) -> GaussianClassifierParams:
    """Build classifier parameters, caching the ridge-regularized precision."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    priors = np.asarray(priors, dtype=np.float64)
    priors = priors / priors.sum()
    d = means.shape[1]
    if kind == "identity":
        cov = np.eye(d)
        precision = np.eye(d)
    else:
        cov = np.asarray(covariance, dtype=np.float64)
        eps = effective_ridge(cov, ridge)
        cov = cov + eps * np.eye(d)
        chol, _ = _chol_logdet(cov)
        identity = np.eye(d)
        precision = sla.cho_solve((chol, True), identity, check_finite=False)
    return GaussianClassifierParams(
        means=means,
        covariance=cov,
        precision=precision,
        log_priors=np.log(priors),
        kind=kind,
    )


def _logits(params: GaussianClassifierParams, X: np.ndarray) -> np.ndarray:
    pm = params.means @ params.precision  # C x d, rows mu_c' S^-1
    quad = 0.5 * np.sum(pm * params.means, axis=1)
    return X @ pm.T - quad + params.log_priors


def posterior(params: GaussianClassifierParams, x: np.ndarray) -> np.ndarray:
    """Class-posterior probabilities for one vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    logits = _logits(params, np.atleast_2d(x))
    log_post = logits - logsumexp(logits, axis=1, keepdims=True)
    probs = np.exp(log_post)
    return probs[0] if single else probs


def log_posterior(params: GaussianClassifierParams, X: np.ndarray) -> np.ndarray:
    logits = _logits(params, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return logits - logsumexp(logits, axis=1, keepdims=True)


def lda_to_softmax(params: GaussianClassifierParams) -> SoftmaxParams:
    """The softmax head equivalent to the generative posterior."""
    weights = params.means @ params.precision
    biases = -0.5 * np.sum(weights * params.means, axis=1) + params.log_priors
    return SoftmaxParams(weights=weights, biases=biases)


def softmax_posterior(params: SoftmaxParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    logits = np.atleast_2d(x) @ params.weights.T + params.biases
    probs = softmax(logits, axis=1)
    return probs[0] if single else probs


def fit_logistic_baseline(
    ds: FeatureSet,
    l2: float = 1e-3,
    epochs: int = 500,
    lr: float = 0.5,
    seed: int = 0,
) -> SoftmaxParams:
    """L2-regularized multinomial logistic fit by full-batch gradient descent.

    Fixed step size, zero initialization; deterministic. The seed is accepted
    for interface symmetry with the other fitters.
    """
    del seed  # zero init makes the fit deterministic
    X = ds.features
    n, d = X.shape
    C = ds.num_classes
    Y = np.zeros((n, C))
    Y[np.arange(n), ds.labels] = 1.0
    W = np.zeros((C, d))
    b = np.zeros(C)
    for _ in range(epochs):
        P = softmax(X @ W.T + b, axis=1)
        err = (P - Y) / n
        W -= lr * (err.T @ X + l2 * W)
        b -= lr * err.sum(axis=0)
    return SoftmaxParams(weights=W, biases=b)


def logistic_loss_grad(
    params: SoftmaxParams, ds: FeatureSet, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-entropy loss and its gradient at the given parameters."""
    X = ds.features
    n = ds.n
    logits = X @ params.weights.T + params.biases
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    loss = -log_probs[np.arange(n), ds.labels].mean()
    loss += 0.5 * l2 * float((params.weights ** 2).sum())
    P = np.exp(log_probs)
    Y = np.zeros_like(P)
    Y[np.arange(n), ds.labels] = 1.0
    err = (P - Y) / n
    return loss, err.T @ X + l2 * params.weights, err.sum(axis=0)


def predict(
    params: GaussianClassifierParams | SoftmaxParams, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels plus posteriors; ties go to the lowest class index."""
    if isinstance(params, SoftmaxParams):
        probs = softmax_posterior(params, X)
    else:
        probs = posterior(params, X)
    probs = np.atleast_2d(probs)
    return np.argmax(probs, axis=1), probs


def accuracy(pred_labels: np.ndarray, true_labels: np.ndarray) -> float:
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise ValidationError("label arrays must have identical shape")
    return float(np.mean(pred_labels == true_labels))


def save_params(params: GaussianClassifierParams, path: str | Path) -> None:
    Path(path).write_text(params.to_json())


def load_params(path: str | Path) -> GaussianClassifierParams:
    return GaussianClassifierParams.from_json(Path(path).read_text())
