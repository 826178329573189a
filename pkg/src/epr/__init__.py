"""Evolutionary polynomial regression with hierarchical (multi-tier) model chaining."""
from .dataset import (
    CaseView, Dataset, DatasetError, EmptyViewError, Tier, VariableSpec, complete_cases,
    listwise_rows, load_dataset, tier_variables,
)
from .evolution import (
    EprConfig, GaConfig, ObjectiveVector, ParetoFront, dominates, evolve, exhaustive_search,
    non_dominated_filter,
)
from .expression import (
    CandidateExponents, DomainError, ExponentMatrix, FitDiagnostics, FittedModel, canonicalize,
    design_matrix, evaluate, render, render_symbolic,
)
from .metrics import (
    CorrelationComparison, CorrelationMatrix, compare_correlations, correlation_matrix, pearson,
)
from .pipeline import (
    HierarchyPlan, ModelSelection, StageSpec, chain_predict, correlation_study, run_stage,
    select_knee,
)
from .regression import FitMode, FitOptions, fit_ls, fit_model, fit_nnls, r_squared

__all__ = [
    "CandidateExponents", "CaseView", "CorrelationComparison", "CorrelationMatrix", "Dataset",
    "DatasetError", "DomainError", "EmptyViewError", "EprConfig", "ExponentMatrix",
    "FitDiagnostics", "FitMode", "FitOptions", "FittedModel", "GaConfig", "HierarchyPlan",
    "ModelSelection", "ObjectiveVector", "ParetoFront", "StageSpec", "Tier", "VariableSpec",
    "canonicalize", "chain_predict", "compare_correlations", "complete_cases",
    "correlation_matrix", "correlation_study", "design_matrix", "dominates", "evaluate", "evolve",
    "exhaustive_search", "fit_ls", "fit_model", "fit_nnls", "listwise_rows", "load_dataset",
    "non_dominated_filter", "pearson", "r_squared", "render", "render_symbolic", "run_stage",
    "select_knee", "tier_variables",
]
