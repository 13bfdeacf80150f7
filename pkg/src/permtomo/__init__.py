"""Exact-permanent Bayesian mean estimation of quantum states from count data."""
from __future__ import annotations

__version__ = "0.1.0"

from .haar import mc_posterior_mixed, mc_posterior_pure, sample_haar_state
from .simulate import born_probabilities, sample_record
from .tomography import (
    bloch_estimate_qubit,
    estimate_mixed,
    estimate_pure,
    estimate_vonneumann_closedform,
    total_probability_mixed,
    total_probability_pure,
)
from .types import (
    AlphaParam,
    DensityMatrix,
    GramSpec,
    GuardLimitError,
    InvariantViolation,
    McConfig,
    McEstimate,
    MeasurementModel,
    OutcomeRecord,
    PureState,
    ScaledValue,
    gram_from_outcomes,
    trace_distance,
    validate_povm,
)

__all__ = [
    "__version__",
    "AlphaParam",
    "DensityMatrix",
    "GramSpec",
    "GuardLimitError",
    "InvariantViolation",
    "McConfig",
    "McEstimate",
    "MeasurementModel",
    "OutcomeRecord",
    "PureState",
    "ScaledValue",
    "bloch_estimate_qubit",
    "born_probabilities",
    "estimate_mixed",
    "estimate_pure",
    "estimate_vonneumann_closedform",
    "gram_from_outcomes",
    "mc_posterior_mixed",
    "mc_posterior_pure",
    "sample_haar_state",
    "sample_record",
    "total_probability_mixed",
    "total_probability_pure",
    "trace_distance",
    "validate_povm",
]
