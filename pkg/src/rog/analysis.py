"""Numerical checks of the theory: closed-form mixture limits, the
condition-number factor phi, margin ratios, the generalization-bound
surrogate, and empirical breakdown sweeps.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .data import FeatureSet, SynthSpec, synthesize
from .errors import AssumptionWarning, ConfigError, SingularCovarianceError
from .estimators import (
    McdConfig,
    default_subset_size,
    mcd_estimate,
    mcd_fit_class,
    sample_estimate,
)

REPORT_COLUMNS = [
    "n",
    "delta_out",
    "err_mcd_l1",
    "err_sample_l1",
    "phi_mcd",
    "phi_sample",
    "margin_ratio",
    "bound_mcd",
    "bound_sample",
]


@dataclass(frozen=True)
class TheoryReport:
    """One grid cell of the convergence study."""

    n_samples: int
    delta_out: float
    delta_mcd: float
    mean_error_mcd: np.ndarray
    mean_error_sample: np.ndarray
    phi_mcd: float
    phi_sample: float
    margin_ratio: float
    bound_mcd: float
    bound_sample: float

    def row(self) -> dict:
        return {
            "n": self.n_samples,
            "delta_out": self.delta_out,
            "err_mcd_l1": float(np.mean(self.mean_error_mcd)),
            "err_sample_l1": float(np.mean(self.mean_error_sample)),
            "phi_mcd": self.phi_mcd,
            "phi_sample": self.phi_sample,
            "margin_ratio": self.margin_ratio,
            "bound_mcd": self.bound_mcd,
            "bound_sample": self.bound_sample,
        }


@dataclass(frozen=True)
class MixtureLimits:
    """Closed-form large-N limits of the contaminated single-class mixture."""

    mix_mean: np.ndarray          # per class, C x d
    mix_covariance: np.ndarray    # d x d (shared isotropic + rank-1 per class)
    mix_cov_per_class: np.ndarray  # C x d x d
    mcd_mean: np.ndarray          # per class, C x d
    mcd_covariance: np.ndarray    # d x d


def phi(covariance: np.ndarray) -> float:
    """4t / (1 + t)^2 where t is the spectral condition number."""
    cov = np.asarray(covariance, dtype=np.float64)
    eigs = np.linalg.eigvalsh((cov + cov.T) / 2.0)
    if eigs[0] <= 0:
        raise SingularCovarianceError(
            f"covariance not positive definite: min eigenvalue {eigs[0]:.3e}"
        )
    t = eigs[-1] / eigs[0]
    return float(4.0 * t / (1.0 + t) ** 2)


def mixture_det(spec: SynthSpec, q: float | np.ndarray, class_index: int = 0):
    """Determinant of the q-contaminated mixture covariance (closed form).

    det = ((1-q) s2 + q so2)^(d-1) * ((1-q) s2 + q so2 + q (1-q) |mu|^2)
    with mu the clean-to-outlier mean offset of the given class.
    """
    q = np.asarray(q, dtype=np.float64)
    s2, so2, d = spec.sigma2, spec.out_sigma2, spec.dim
    mu = spec.class_means[class_index] - spec.out_mean
    iso = (1.0 - q) * s2 + q * so2
    return iso ** (d - 1) * (iso + q * (1.0 - q) * float(mu @ mu))


def lemma1_limits(spec: SynthSpec) -> MixtureLimits:
    """Large-N limits of the sample and MCD estimators on the synthetic mix.

    Sample: mean (1-d) mu_c + d mu_out; covariance
    ((1-d) s2 + d so2) I + d (1-d) (mu_c - mu_out)(mu_c - mu_out)'.
    MCD (when d_mcd <= 1 - d_out and so2 > s2): mean mu_c, covariance s2 I.
    """
    d_out = spec.delta_out
    eye = np.eye(spec.dim)
    iso = (1.0 - d_out) * spec.sigma2 + d_out * spec.out_sigma2
    mix_means = (1.0 - d_out) * spec.class_means + d_out * spec.out_mean
    per_class = np.empty((spec.num_classes, spec.dim, spec.dim))
    for c in range(spec.num_classes):
        offset = spec.class_means[c] - spec.out_mean
        per_class[c] = iso * eye + d_out * (1.0 - d_out) * np.outer(offset, offset)
    return MixtureLimits(
        mix_mean=mix_means,
        mix_covariance=per_class.mean(axis=0),
        mix_cov_per_class=per_class,
        mcd_mean=spec.class_means.copy(),
        mcd_covariance=spec.sigma2 * eye,
    )


def generalization_bound_term(
    means: np.ndarray, covariance: np.ndarray, sigma2: float
) -> float:
    """Exponential double sum of the generalization bound.

    sum_{c} sum_{c' != c} exp(-|mu_c - mu_c'|_2 / (8 sigma2) * phi(S)).
    The bound's D |mu - mu_hat|_1 term has an unknowable constant and is
    reported separately as the raw l1 error.
    """
    means = np.atleast_2d(means)
    p = phi(covariance)
    total = 0.0
    for c in range(means.shape[0]):
        for c2 in range(means.shape[0]):
            if c2 == c:
                continue
            gap = float(np.linalg.norm(means[c] - means[c2]))
            total += float(np.exp(-gap / (8.0 * sigma2) * p))
    return total


def _check_assumptions(spec: SynthSpec, cfg: McdConfig) -> None:
    k = cfg.subset_size_per_class or default_subset_size(spec.n_per_class, spec.dim)
    delta_mcd = k / spec.n_per_class
    if not spec.outliers_scattered:
        warnings.warn(
            "outlier variance not larger than clean variance (A3 violated)",
            AssumptionWarning,
        )
    if spec.delta_out >= 1.0 - delta_mcd or delta_mcd <= spec.dim / spec.n_per_class:
        warnings.warn(
            "outlier fraction too large for the MCD subset size (A4 violated)",
            AssumptionWarning,
        )


def theorem1_report(
    spec: SynthSpec,
    cfg: McdConfig | None = None,
    n_grid: list[int] | None = None,
    seed: int = 0,
) -> list[TheoryReport]:
    """Estimator errors, phi values and margin ratios over a sample-size grid."""
    cfg = cfg or McdConfig()
    n_grid = n_grid or [1000, 10_000, 100_000]
    reports = []
    for i, n in enumerate(n_grid):
        cell = SynthSpec(
            class_means=spec.class_means,
            sigma2=spec.sigma2,
            out_mean=spec.out_mean,
            out_sigma2=spec.out_sigma2,
            delta_out=spec.delta_out,
            n_per_class=n,
            seed=spec.seed + 7919 * i + seed,
        )
        _check_assumptions(cell, cfg)
        ds, _ = synthesize(cell)
        s_stats, s_tied, _ = sample_estimate(ds)
        m_fit, m_tied, _ = mcd_estimate(ds, cfg, seed=seed + i)

        sample_means = np.vstack([s.mean for s in s_stats])
        mcd_means = np.vstack([f.stats.mean for f in m_fit.class_fits])
        err_sample = np.abs(sample_means - cell.class_means).sum(axis=1)
        err_mcd = np.abs(mcd_means - cell.class_means).sum(axis=1)

        phi_s = phi(s_tied)
        phi_m = phi(m_tied)
        ratios = []
        for c in range(cell.num_classes):
            for c2 in range(c + 1, cell.num_classes):
                num = phi_m * np.linalg.norm(mcd_means[c] - mcd_means[c2])
                den = phi_s * np.linalg.norm(sample_means[c] - sample_means[c2])
                ratios.append(num / den)
        k = cfg.subset_size_per_class or default_subset_size(n, cell.dim)
        reports.append(
            TheoryReport(
                n_samples=n,
                delta_out=cell.delta_out,
                delta_mcd=k / n,
                mean_error_mcd=err_mcd,
                mean_error_sample=err_sample,
                phi_mcd=phi_m,
                phi_sample=phi_s,
                margin_ratio=float(np.mean(ratios)),
                bound_mcd=generalization_bound_term(mcd_means, m_tied, cell.sigma2),
                bound_sample=generalization_bound_term(
                    sample_means, s_tied, cell.sigma2
                ),
            )
        )
    return reports


@dataclass(frozen=True)
class BreakdownPoint:
    """One contamination level of the breakdown sweep."""

    fraction: float
    displacement: float
    log_eig_range: float


def breakdown_sweep(
    points: np.ndarray,
    estimator: str,
    fractions: list[float],
    cfg: McdConfig | None = None,
    true_mean: np.ndarray | None = None,
    magnitude: float = 1e6,
    seed: int = 0,
) -> tuple[list[BreakdownPoint], float]:
    """Replace a growing fraction of points with a fixed far point.

    Records the mean-estimate displacement from the true mean and the
    log-eigenvalue range of the covariance estimate at each contamination
    level. Returns the curve and the smallest swept fraction at which the
    error exceeds 10x the clean-data error (inf if it never does).
    """
    if estimator not in ("sample", "mcd"):
        raise ConfigError(f"unknown estimator {estimator!r}")
    cfg = cfg or McdConfig()
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if true_mean is None:
        true_mean = points.mean(axis=0)
    far = np.full(d, magnitude)

    def estimate(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if estimator == "sample":
            return pts.mean(axis=0), np.cov(pts, rowvar=False, bias=True)
        fit, _ = mcd_fit_class(pts, cfg, seed=seed)
        return fit.stats.mean, fit.stats.covariance

    curve = []
    rng = np.random.default_rng(seed)
    for frac in fractions:
        m = int(frac * n)
        pts = points.copy()
        if m > 0:
            rows = rng.choice(n, size=m, replace=False)
            pts[rows] = far
        mean, cov = estimate(pts)
        eigs = np.linalg.eigvalsh((cov + cov.T) / 2.0)
        eigs = np.clip(eigs, 1e-300, None)
        curve.append(
            BreakdownPoint(
                fraction=frac,
                displacement=float(np.linalg.norm(mean - true_mean)),
                log_eig_range=float(np.log(eigs[-1]) - np.log(eigs[0])),
            )
        )

    clean_mean, _ = estimate(points)
    clean_err = float(np.linalg.norm(clean_mean - true_mean))
    threshold = 10.0 * max(clean_err, 1e-12)
    broken = [p.fraction for p in curve if p.displacement > threshold]
    return curve, (min(broken) if broken else float("inf"))


def write_report_csv(reports: list[TheoryReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row())


def write_report_json(reports: list[TheoryReport], path: str | Path) -> None:
    Path(path).write_text(json.dumps([rep.row() for rep in reports], indent=2))
