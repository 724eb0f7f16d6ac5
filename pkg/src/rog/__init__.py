"""Robust generative-classifier toolkit for noisy-label inference.

Fits LDA-form Gaussian classifiers on feature vectors using robust
location/scatter estimators (minimum covariance determinant, least trimmed
squares, trimmed k-means), ensembles per-layer classifiers, and numerically
verifies the estimators' large-sample limits on synthetic data.
"""

from .data import (
    FeatureSet,
    NoiseSpec,
    SynthSpec,
    average_pool,
    inject_noise,
    load_feature_set,
    save_feature_set,
    split,
    synthesize,
)
from .estimators import (
    ClassStats,
    McdConfig,
    McdFit,
    lts_mean,
    mahalanobis,
    mcd_estimate,
    mcd_fit_class,
    sample_estimate,
    trimmed_kmeans,
)
from .classifier import (
    GaussianClassifierParams,
    SoftmaxParams,
    accuracy,
    fit_logistic_baseline,
    lda_to_softmax,
    make_params,
    posterior,
    predict,
    softmax_posterior,
)
from .ensemble import (
    EnsembleModel,
    LayeredFeatureSet,
    build_rog,
    ensemble_posterior,
    filter_validation,
    fit_weights,
)
from .analysis import (
    TheoryReport,
    breakdown_sweep,
    generalization_bound_term,
    lemma1_limits,
    phi,
    theorem1_report,
)

__version__ = "0.1.0"
