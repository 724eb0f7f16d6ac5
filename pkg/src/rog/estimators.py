"""Location/scatter estimators: sample, minimum-covariance-determinant (MCD),
least-trimmed-squares mean, and trimmed k-means, plus tied-covariance pooling.

The MCD fit runs the classic concentration scheme per class: start from a
random K-subset, repeatedly keep the K points with smallest Mahalanobis
distance to the current estimate and re-estimate, which never increases the
covariance determinant. An exhaustive-enumeration mode exists as a test
oracle for tiny instances. All determinant work happens in log space.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla
from scipy.optimize import brentq
from scipy.stats import chi2

from .data import FeatureSet
from .errors import (
    ConfigError,
    EmptyClassError,
    EmptyClusterError,
    SingularCovarianceError,
)

LOGDET_FLOOR = math.log(1e-300)
EXACT_ENUMERATION_CAP = 10**6
STOP_REL_TOL = 1e-12  # "determinant not decreasing anymore"


@dataclass(frozen=True)
class ClassStats:
    """Mean/covariance/count of one class (or one cluster)."""

    mean: np.ndarray
    covariance: np.ndarray
    count: int


@dataclass(frozen=True)
class McdConfig:
    """Knobs for the MCD fit.

    subset_size_per_class: K_c override; default floor((N_c + d + 1) / 2).
    ridge: absolute regularizer added to covariances before inversion and
        determinant; None means the adaptive 1e-6 * trace / d default.
    mode: "cstep" (concentration, multi-start) or "exact" (enumeration oracle).
    scaling: "none" keeps the raw selected-subset covariance; "truncation"
        rescales it to undo the central-subset shrinkage under a Gaussian
        model (needed for the covariance itself to be consistent).
    priors: "uniform" (1/C) or "counts" (K_c / sum K_c).
    """

    subset_size_per_class: int | None = None
    max_iters: int = 2
    restarts: int = 10
    ridge: float | None = None
    mode: str = "cstep"
    scaling: str = "none"
    priors: str = "uniform"

    def __post_init__(self):
        if self.mode not in ("cstep", "exact"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.scaling not in ("none", "truncation"):
            raise ConfigError(f"unknown scaling {self.scaling!r}")
        if self.priors not in ("uniform", "counts"):
            raise ConfigError(f"unknown priors {self.priors!r}")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.ridge is not None and self.ridge < 0:
            raise ConfigError("ridge must be >= 0")


@dataclass(frozen=True)
class McdClassFit:
    """Result of the per-class MCD optimization."""

    stats: ClassStats
    indices: np.ndarray
    log_det: float
    det_trace: list[float]


@dataclass(frozen=True)
class McdFit:
    """Per-class MCD fits plus the determinant traces of every restart."""

    class_fits: list[McdClassFit]
    traces: list[list[list[float]]]  # [class][restart][iteration]

    def to_json(self) -> str:
        payload = {
            str(c): {
                "indices": fit.indices.tolist(),
                "mean": fit.stats.mean.tolist(),
                "covariance": fit.stats.covariance.ravel().tolist(),
                "log_det": fit.log_det,
            }
            for c, fit in enumerate(self.class_fits)
        }
        return json.dumps(payload)


def default_subset_size(n: int, d: int) -> int:
    """K = floor((N + d + 1) / 2), the near-optimal-breakdown choice."""
    return (n + d + 1) // 2


def effective_ridge(cov: np.ndarray, ridge: float | None) -> float:
    if ridge is not None:
        return ridge
    d = cov.shape[0]
    return 1e-6 * float(np.trace(cov)) / d


def _mean_cov(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / points.shape[0]
    return mean, cov


def _chol_logdet(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor and log-determinant of an SPD matrix."""
    try:
        chol = sla.cholesky(cov, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise SingularCovarianceError(f"covariance not SPD: {exc}") from exc
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    if log_det < LOGDET_FLOOR:
        raise SingularCovarianceError(
            f"determinant underflow: log det = {log_det:.1f}"
        )
    return chol, log_det


def mahalanobis(
    x: np.ndarray,
    mean: np.ndarray,
    covariance: np.ndarray,
    ridge: float | None = None,
) -> np.ndarray | float:
    """Squared Mahalanobis distance(s) with the ridge-regularized inverse."""
    cov = np.asarray(covariance, dtype=np.float64)
    eps = effective_ridge(cov, ridge)
    chol, _ = _chol_logdet(cov + eps * np.eye(cov.shape[0]))
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    diff = np.atleast_2d(x) - mean
    z = sla.solve_triangular(chol, diff.T, lower=True, check_finite=False)
    d2 = np.sum(z * z, axis=0)
    return float(d2[0]) if single else d2


def _smallest_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest values, ties broken by original index."""
    return np.argsort(values, kind="stable")[:k]


def _subset_logdet(
    points: np.ndarray, subset: np.ndarray, ridge: float | None
) -> tuple[np.ndarray, np.ndarray, float, float]:
    mean, cov = _mean_cov(points[subset])
    eps = effective_ridge(cov, ridge)
    cov = cov + eps * np.eye(cov.shape[1])
    _, log_det = _chol_logdet(cov)
    return mean, cov, log_det, eps


def _truncation_factor(d: int, r2_max: float) -> float:
    """Scale undoing the shrinkage of the covariance of a central subset.

    Model: the selected points are a Gaussian sample restricted to the
    Mahalanobis ball that just contains them. If the true covariance is
    c * Sigma_raw, the ball covers the central gamma = F_d(r2_max / c) mass
    and the restricted covariance shrinks by k(gamma); self-consistency
    requires c * k(F_d(r2_max / c)) = 1, solved for c by bisection.
    """
    def k(gamma: float) -> float:
        if gamma <= 1e-12:
            return 0.0
        q = chi2.ppf(gamma, d)
        return chi2.cdf(q, d + 2) / gamma

    def residual(c: float) -> float:
        return c * k(chi2.cdf(r2_max / c, d)) - 1.0

    if not np.isfinite(r2_max) or r2_max <= 0:
        return 1.0
    if residual(1.0) >= 0:
        return 1.0
    hi = 2.0
    while residual(hi) < 0 and hi < 1e9:
        hi *= 2.0
    if residual(hi) < 0:
        return 1.0
    return float(brentq(residual, 1.0, hi, xtol=1e-10))


def _concentrate(
    points: np.ndarray,
    initial: np.ndarray,
    k: int,
    max_iters: int,
    ridge: float | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, list[float]]:
    """Run concentration steps from an initial subset; det trace is recorded."""
    subset = np.sort(initial)
    mean, cov, log_det, _ = _subset_logdet(points, subset, ridge)
    trace = [log_det]
    for _ in range(max_iters):
        dist = mahalanobis(points, mean, cov, ridge=0.0)
        new_subset = np.sort(_smallest_k(dist, k))
        new_mean, new_cov, new_log_det, _ = _subset_logdet(points, new_subset, ridge)
        if new_log_det >= log_det:
            # no decrease: keep the previous state, do not record an uptick
            break
        subset, mean, cov = new_subset, new_mean, new_cov
        trace.append(new_log_det)
        if new_log_det > log_det - STOP_REL_TOL * max(1.0, abs(log_det)):
            log_det = new_log_det
            break
        log_det = new_log_det
    return subset, mean, cov, log_det, trace


def mcd_fit_class(
    points: np.ndarray,
    cfg: McdConfig | None = None,
    seed: int = 0,
) -> tuple[McdClassFit, list[list[float]]]:
    """MCD fit for the points of a single class.

    Returns the best fit over restarts (cstep) or the enumerated optimum
    (exact), plus the per-restart determinant traces.
    """
    cfg = cfg or McdConfig()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ConfigError("points must be a 2-d array")
    n, d = points.shape
    k = cfg.subset_size_per_class or default_subset_size(n, d)
    if not d < k <= n:
        raise ConfigError(f"need d < K <= N, got d={d}, K={k}, N={n}")

    traces: list[list[float]] = []
    if cfg.mode == "exact":
        if math.comb(n, k) > EXACT_ENUMERATION_CAP:
            raise ConfigError(
                f"exact mode refused: C({n},{k}) > {EXACT_ENUMERATION_CAP}"
            )
        best = None
        for combo in itertools.combinations(range(n), k):
            subset = np.array(combo)
            mean, cov, log_det, _ = _subset_logdet(points, subset, cfg.ridge)
            if best is None or log_det < best[3]:
                best = (subset, mean, cov, log_det)
        subset, mean, cov, log_det = best
        best_trace = [log_det]
        traces.append(best_trace)
    else:
        rng = np.random.default_rng(seed)
        best = None
        best_trace = None
        for _ in range(cfg.restarts):
            initial = rng.choice(n, size=k, replace=False)
            subset, mean, cov, log_det, trace = _concentrate(
                points, initial, k, cfg.max_iters, cfg.ridge
            )
            traces.append(trace)
            if best is None or log_det < best[3]:
                best = (subset, mean, cov, log_det)
                best_trace = trace
        subset, mean, cov, log_det = best

    if cfg.scaling == "truncation":
        dist = mahalanobis(points[subset], mean, cov, ridge=0.0)
        cov = cov * _truncation_factor(d, float(dist.max()))

    fit = McdClassFit(
        stats=ClassStats(mean=mean, covariance=cov, count=k),
        indices=subset,
        log_det=log_det,
        det_trace=best_trace,
    )
    return fit, traces


def sample_estimate(
    ds: FeatureSet,
) -> tuple[list[ClassStats], np.ndarray, np.ndarray]:
    """Per-class sample means, the pooled tied covariance, and count priors.

    The tied covariance sums per-class-centered outer products and divides by
    the total N.
    """
    d = ds.dim
    stats: list[ClassStats] = []
    pooled = np.zeros((d, d))
    priors = np.zeros(ds.num_classes)
    for c in range(ds.num_classes):
        rows = ds.class_indices(c)
        if rows.size == 0:
            raise EmptyClassError(f"class {c} has no samples")
        pts = ds.features[rows]
        mean, cov = _mean_cov(pts)
        stats.append(ClassStats(mean=mean, covariance=cov, count=rows.size))
        pooled += cov * rows.size
        priors[c] = rows.size / ds.n
    return stats, pooled / ds.n, priors


def _max_workers() -> int:
    env = os.environ.get("ROG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


def mcd_estimate(
    ds: FeatureSet,
    cfg: McdConfig | None = None,
    seed: int = 0,
) -> tuple[McdFit, np.ndarray, np.ndarray]:
    """Per-class MCD fits pooled into one tied covariance.

    Tied covariance is the K_c-weighted average of the per-class selected
    covariances; priors are uniform by default ("counts" uses K_c / sum K_c).
    Per-class fits are independent and run on the ROG_THREADS pool.
    """
    cfg = cfg or McdConfig()
    classes = list(range(ds.num_classes))
    for c in classes:
        if ds.class_indices(c).size == 0:
            raise EmptyClassError(f"class {c} has no samples")

    def fit_one(c: int) -> tuple[McdClassFit, list[list[float]]]:
        return mcd_fit_class(ds.features[ds.class_indices(c)], cfg, seed=seed + c)

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit_one, classes))
    else:
        results = [fit_one(c) for c in classes]

    class_fits = [r[0] for r in results]
    traces = [r[1] for r in results]
    counts = np.array([f.stats.count for f in class_fits], dtype=np.float64)
    tied = sum(f.stats.covariance * f.stats.count for f in class_fits) / counts.sum()
    if cfg.priors == "counts":
        priors = counts / counts.sum()
    else:
        priors = np.full(ds.num_classes, 1.0 / ds.num_classes)
    return McdFit(class_fits=class_fits, traces=traces), tied, priors


def lts_mean(
    points: np.ndarray,
    k: int,
    mode: str = "cstep",
    restarts: int = 10,
    max_iters: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Mean of the K-subset with the smallest trimmed sum of squares.

    cstep mode concentrates on squared Euclidean distance; exact mode
    enumerates subsets (test oracle).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    if k > n or k < 1:
        raise ConfigError(f"need 1 <= K <= N, got K={k}, N={n}")
    if k == n:
        return points.mean(axis=0)

    def trimmed_sse(subset: np.ndarray) -> float:
        center = points[subset].mean(axis=0)
        return float(((points[subset] - center) ** 2).sum())

    if mode == "exact":
        if math.comb(n, k) > EXACT_ENUMERATION_CAP:
            raise ConfigError("exact mode refused: too many subsets")
        best = min(
            (np.array(c) for c in itertools.combinations(range(n), k)),
            key=trimmed_sse,
        )
        return points[best].mean(axis=0)

    rng = np.random.default_rng(seed)
    best_mean, best_sse = None, np.inf
    for _ in range(restarts):
        subset = rng.choice(n, size=k, replace=False)
        mean = points[subset].mean(axis=0)
        sse = trimmed_sse(subset)
        for _ in range(max_iters):
            dist = ((points - mean) ** 2).sum(axis=1)
            subset = _smallest_k(dist, k)
            mean = points[subset].mean(axis=0)
            new_sse = trimmed_sse(subset)
            if new_sse > sse - STOP_REL_TOL * max(1.0, sse):
                sse = min(sse, new_sse)
                break
            sse = new_sse
        if sse < best_sse:
            best_mean, best_sse = mean, sse
    return best_mean


def trimmed_kmeans(
    ds: FeatureSet,
    trim_fraction: float = 0.5,
    iters: int = 2,
) -> tuple[list[ClassStats], np.ndarray, np.ndarray]:
    """Trimmed k-means seeded from the noisy class means.

    Each iteration assigns every point to its nearest centroid, drops the
    trim_fraction of points farthest from their assigned centroid (globally),
    and recomputes centroids from the survivors. Clusters are then matched to
    class labels by the majority of noisy labels among retained members, and
    a tied covariance is pooled over retained points.

    Returns (per-class stats, tied covariance, assignment). assignment[i] is
    the class of point i's final cluster, or -1 if the point was trimmed.
    """
    if not 0.0 <= trim_fraction < 1.0:
        raise ConfigError(f"trim_fraction must be in [0, 1), got {trim_fraction}")
    X = ds.features
    n, d = X.shape
    C = ds.num_classes
    centroids = np.zeros((C, d))
    for c in range(C):
        rows = ds.class_indices(c)
        if rows.size == 0:
            raise EmptyClassError(f"class {c} has no samples")
        centroids[c] = X[rows].mean(axis=0)

    n_keep = n - int(trim_fraction * n)
    assign = np.zeros(n, dtype=np.int64)
    retained = np.ones(n, dtype=bool)
    for _ in range(iters):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        nearest = d2[np.arange(n), assign]
        keep_rows = _smallest_k(nearest, n_keep)
        retained = np.zeros(n, dtype=bool)
        retained[keep_rows] = True
        for c in range(C):
            members = retained & (assign == c)
            if not members.any():
                # restart the empty cluster at the farthest retained point
                far = keep_rows[np.argmax(nearest[keep_rows])]
                centroids[c] = X[far]
                assign[far] = c
            else:
                centroids[c] = X[members].mean(axis=0)

    # match clusters to class labels by the majority of noisy labels
    counts = np.zeros((C, C))
    for j in range(C):
        members = retained & (assign == j)
        if members.any():
            counts[j] = np.bincount(ds.labels[members], minlength=C)
    from scipy.optimize import linear_sum_assignment

    cluster_rows, class_cols = linear_sum_assignment(counts, maximize=True)
    cluster_to_class = dict(zip(cluster_rows, class_cols))

    stats: list[ClassStats | None] = [None] * C
    pooled = np.zeros((d, d))
    total = 0
    for j in range(C):
        c = cluster_to_class[j]
        members = retained & (assign == j)
        if not members.any():
            raise EmptyClusterError(f"cluster {j} ended empty")
        pts = X[members]
        mean, cov = _mean_cov(pts)
        stats[c] = ClassStats(mean=mean, covariance=cov, count=int(members.sum()))
        pooled += cov * members.sum()
        total += int(members.sum())

    assignment = np.full(n, -1, dtype=np.int64)
    table = np.array([cluster_to_class[j] for j in range(C)])
    assignment[retained] = table[assign[retained]]
    return stats, pooled / total, assignment
