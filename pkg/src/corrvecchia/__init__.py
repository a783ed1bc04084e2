"""Correlation-based Vecchia approximations for Gaussian processes.

Sparse inverse-Cholesky factors built from ordered conditioning sets, with
orderings and conditioning-set selection driven by correlation distance
rather than Euclidean distance.  Includes covariance model catalog, exact
and approximate likelihoods, KL diagnostics, posterior prediction, noisy
observation handling, Fisher-scoring parameter estimation, and posterior
parameter grids.
"""

from .covmodels import (
    CovarianceModel,
    InputSet,
    ModelFamily,
    ParamVector,
    default_params,
    make_model,
)
from .errors import (
    CorrVecchiaError,
    DimensionMismatch,
    DivergenceDetected,
    EmptyTestSet,
    InvalidParameter,
    InvalidShape,
    MissingColumn,
    NegativeNoise,
    NotPositiveDefinite,
    ParseError,
    SingularMatrix,
    ZeroNoise,
)
from .geometry import (
    CorrelationMetric,
    EuclideanMetric,
    OrderedApprox,
    RandomMetric,
    TimeMetric,
    maximin_order,
    nearest_neighbors,
)
from .inference import (
    LogNormalPrior,
    PosteriorGrid,
    fisher_scoring,
    posterior_grid,
    rmsd,
)
from .linalg import SparseFactor
from .scenarios import (
    SCENARIO_NAMES,
    Scenario,
    generate_inputs,
    simulate_exact,
    train_test_split,
)
from .strategies import (
    CONDITIONINGS,
    ORDERINGS,
    build_skeleton,
    parse_strategy,
)
from .vecchia import (
    VecchiaApprox,
    build_factor,
    exact_loglik,
    gaussian_kl,
    kl_divergence,
    loglik,
    loglik_noisy_ic,
    loglik_noisy_naive,
    predict,
    predict_noisy,
    vecchia_approx,
)

__version__ = "1.0.0"

__all__ = [
    "CovarianceModel",
    "InputSet",
    "ModelFamily",
    "ParamVector",
    "default_params",
    "make_model",
    "CorrVecchiaError",
    "DimensionMismatch",
    "DivergenceDetected",
    "EmptyTestSet",
    "InvalidParameter",
    "InvalidShape",
    "MissingColumn",
    "NegativeNoise",
    "NotPositiveDefinite",
    "ParseError",
    "SingularMatrix",
    "ZeroNoise",
    "CorrelationMetric",
    "EuclideanMetric",
    "OrderedApprox",
    "RandomMetric",
    "TimeMetric",
    "maximin_order",
    "nearest_neighbors",
    "LogNormalPrior",
    "PosteriorGrid",
    "fisher_scoring",
    "posterior_grid",
    "rmsd",
    "SparseFactor",
    "SCENARIO_NAMES",
    "Scenario",
    "generate_inputs",
    "simulate_exact",
    "train_test_split",
    "CONDITIONINGS",
    "ORDERINGS",
    "build_skeleton",
    "parse_strategy",
    "VecchiaApprox",
    "build_factor",
    "exact_loglik",
    "gaussian_kl",
    "kl_divergence",
    "loglik",
    "loglik_noisy_ic",
    "loglik_noisy_naive",
    "predict",
    "predict_noisy",
    "vecchia_approx",
    "__version__",
]
