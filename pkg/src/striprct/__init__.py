"""Randomization-based inference for strip-plot designs."""

from .design import (
    Contrast,
    DesignDims,
    DesignError,
    PotentialOutcomeTable,
    block_contrast,
    compute_means,
    is_between_block_additive,
    is_strictly_additive,
    population_contrast,
)
from .estimators import ConfidenceInterval, ContrastEstimate, confidence_interval, conservative_variance, \
    estimate_contrast
from .randomizer import Assignment, SeedSpec, draw_assignment, enumerate_assignments, observe
from .variance import (
    UEstimatorMatrix,
    delta0_bias,
    max_eigenvalue,
    quadratic_variance_estimator,
    sampling_variance,
    theorem1_covariance,
    u0_matrix,
)

__version__ = "0.1.0"
