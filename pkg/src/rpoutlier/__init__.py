"""Sequential random-projection outlier detection for high-dimensional
Gaussian data.

A point is tested against a reference sample through standardized
one-dimensional random projections with a sequential stopping rule;
decision constants are calibrated by Monte Carlo so the test holds a
prescribed level at the outlier threshold while using a prescribed mean
number of projections.
"""

from .calibration import (
    CalibrationResult,
    CalibrationTarget,
    LevelEstimate,
    bisect_b,
    calibrate,
    estimate_level,
    expected_projections_identity,
    initial_ab,
    recalibrate_b,
    simulate_score,
    simulate_scores,
)
from .cache import CalibrationCache, cache_key
from .covariance import (
    CovarianceModel,
    CovarianceSpec,
    build_covariance,
    sample_gaussian,
    sample_on_mahalanobis_sphere,
)
from .detector import (
    Decision,
    DetectorConstants,
    VoteReport,
    analyse_sample,
    binomial_quantile,
    classify_point,
    vote_analyse,
)
from .errors import (
    BracketFailure,
    CacheError,
    CapExceeded,
    DegenerateData,
    DegenerateProjection,
    RPOutlierError,
)
from .experiments import (
    DEFAULT_CONTAMINATION_RADII,
    ExperimentReport,
    format_reports_table,
    reference_constants,
    run_clean_sample_experiment,
    run_contamination_experiment,
    run_level_experiment,
    run_preset,
    tuned_clean_sample_quantile,
)
from .special import chi2_quantile
from .stats import (
    DataMatrix,
    RobustLocationScale,
    Threshold,
    madn,
    median,
    project_scores,
    sample_unit_direction,
    threshold_cnd,
)

__version__ = "0.1.0"

__all__ = [
    "BracketFailure",
    "CacheError",
    "CalibrationCache",
    "CalibrationResult",
    "CalibrationTarget",
    "CapExceeded",
    "CovarianceModel",
    "CovarianceSpec",
    "DEFAULT_CONTAMINATION_RADII",
    "DataMatrix",
    "Decision",
    "DegenerateData",
    "DegenerateProjection",
    "DetectorConstants",
    "ExperimentReport",
    "LevelEstimate",
    "RPOutlierError",
    "RobustLocationScale",
    "Threshold",
    "VoteReport",
    "analyse_sample",
    "binomial_quantile",
    "bisect_b",
    "build_covariance",
    "cache_key",
    "calibrate",
    "chi2_quantile",
    "classify_point",
    "estimate_level",
    "expected_projections_identity",
    "format_reports_table",
    "initial_ab",
    "madn",
    "median",
    "project_scores",
    "recalibrate_b",
    "reference_constants",
    "run_clean_sample_experiment",
    "run_contamination_experiment",
    "run_level_experiment",
    "run_preset",
    "sample_gaussian",
    "sample_on_mahalanobis_sphere",
    "sample_unit_direction",
    "simulate_score",
    "simulate_scores",
    "threshold_cnd",
    "tuned_clean_sample_quantile",
    "vote_analyse",
]
