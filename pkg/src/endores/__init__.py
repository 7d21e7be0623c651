"""Simulation and estimation toolkit for endogeneity bias in comparative regression studies."""

from endores.bias import (
    BiasTerm,
    FactorizationResult,
    PropositionReport,
    ScenarioPair,
    asymptotic_bias,
    bias_term,
    criterion_gap,
    factorization_check,
    mc_expectation_beta,
    mc_expectation_tsls,
    proposition_check,
)
from endores.dgp import (
    DgpSpec,
    Exogenous,
    LinearErrorCorrelation,
    MeasurementError,
    OmittedVariable,
    Sample,
    Simultaneity,
    generate_sample,
    observed_x_cov,
    sample_c,
    theoretical_c,
)
from endores.estimate import DiffResult, FitResult, diff_estimator, ols_fit, tsls_fit

__version__ = "0.1.0"

__all__ = [
    "BiasTerm",
    "DgpSpec",
    "DiffResult",
    "Exogenous",
    "FactorizationResult",
    "FitResult",
    "LinearErrorCorrelation",
    "MeasurementError",
    "OmittedVariable",
    "PropositionReport",
    "Sample",
    "ScenarioPair",
    "Simultaneity",
    "asymptotic_bias",
    "bias_term",
    "criterion_gap",
    "diff_estimator",
    "factorization_check",
    "generate_sample",
    "mc_expectation_beta",
    "mc_expectation_tsls",
    "observed_x_cov",
    "ols_fit",
    "proposition_check",
    "sample_c",
    "theoretical_c",
    "tsls_fit",
]
