"""Entropy balancing weights and treatment-effect estimators."""

from ._ebal import (
    BalanceSolution,
    Dataset,
    EbalError,
    EstimandUndefinedError,
    EvaluationError,
    InvalidInputError,
    NotConvergedError,
    OverlapError,
    RankDeficientError,
    SeparationError,
    EstimateReport,
    PropensityFit,
    check_feasibility,
    dual_gradient,
    dual_objective,
    estimate,
    fit_logistic,
    gen_kang_schafer,
    gen_lunceford_davidian,
    sandwich_variance,
    simulate,
    solve,
)

__all__ = [
    "BalanceSolution",
    "Dataset",
    "EbalError",
    "EstimandUndefinedError",
    "EvaluationError",
    "InvalidInputError",
    "NotConvergedError",
    "OverlapError",
    "RankDeficientError",
    "SeparationError",
    "EstimateReport",
    "PropensityFit",
    "check_feasibility",
    "dual_gradient",
    "dual_objective",
    "estimate",
    "fit_logistic",
    "gen_kang_schafer",
    "gen_lunceford_davidian",
    "sandwich_variance",
    "simulate",
    "solve",
]
