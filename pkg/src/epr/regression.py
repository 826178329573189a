"""Coefficient estimation for a fixed structure.

Both solvers work on a copy of the design whose columns are scaled to unit
RMS; coefficients are mapped back to original units before returning.
Standard errors come from the classical OLS covariance
``sigma^2 (D^T D)^-1`` with ``sigma^2 = SSE / (n - p)``; in non-negative mode
they are computed on the columns that ended up strictly positive.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .expression import (
    ExponentMatrix,
    FitDiagnostics,
    FittedModel,
    term_columns,
)

_EPS = np.finfo(float).eps
_ROUNDING = 64


class RegressionError(ValueError):
    pass


class RankDeficientError(RegressionError):
    pass


class FitMode(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    NON_NEGATIVE = "non_negative"


@dataclass(frozen=True)
class FitOptions:
    mode: FitMode = FitMode.UNCONSTRAINED
    bias: bool = True
    significance_multiplier: float = 2.0
    max_prune_iterations: int = 10

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", FitMode(self.mode))
        except ValueError:
            raise RegressionError(f"unknown fit mode {self.mode!r}") from None
        m = self.significance_multiplier
        if not (isinstance(m, (int, float)) and math.isfinite(m) and m > 0):
            raise RegressionError(f"significance_multiplier must be finite and > 0, got {m!r}")
        if int(self.max_prune_iterations) < 1:
            raise RegressionError("max_prune_iterations must be >= 1")


def r_squared(predicted, actual) -> float:
    """``1 - SSE/SST``; negative when the prediction is worse than the mean."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or actual.ndim != 1:
        raise RegressionError("predicted and actual must be 1-D vectors of equal length")
    if actual.size < 2:
        raise RegressionError("r_squared needs at least two observations")
    sst = float(np.sum((actual - actual.mean()) ** 2))
    if sst == 0.0:
        raise RegressionError("r_squared is undefined for a constant target")
    sse = float(np.sum((predicted - actual) ** 2))
    return 1.0 - sse / sst


def _r_squared_or_degenerate(sse: float, y: np.ndarray) -> float:
    # Constant targets have no variance to explain; an exact fit scores 1.
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst <= 0.0 or y.size < 2:
        return 1.0 if sse <= 1e-24 * max(1.0, float(y @ y)) else 0.0
    return 1.0 - sse / sst


def _check_problem(design, y):
    D = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if D.ndim != 2 or y.ndim != 1 or D.shape[0] != y.shape[0]:
        raise RegressionError(f"design {D.shape} and target {y.shape} do not conform")
    n, p = D.shape
    if p < 1 or n < p:
        raise RegressionError(f"need n >= p >= 1, got n={n}, p={p}")
    if not (np.isfinite(D).all() and np.isfinite(y).all()):
        raise RegressionError("design and target must be finite")
    return D, y


def _unit_rms(D):
    scale = np.sqrt(np.mean(D * D, axis=0))
    scale[scale == 0.0] = 1.0
    return D / scale, scale


def _svd(Ds):
    """Thin SVD pieces: ``U``, ``s``, ``Vt`` and the numerical rank."""
    U, s, Vt = np.linalg.svd(Ds, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(Ds.shape) * _EPS)) if s.size and s[0] > 0 else 0
    return U, s, Vt, rank


def _rank(Ds) -> int:
    if Ds.shape[1] == 0:
        return 0
    return _svd(Ds)[3]


def _solve_and_errors(Ds, y):
    """Minimum-norm LS solution plus the diagonal of ``pinv(Ds) pinv(Ds)^T``."""
    U, s, Vt, rank = _svd(Ds)
    V = Vt[:rank].T / s[:rank]
    coef = V @ (U[:, :rank].T @ y)
    return coef, np.sum(V * V, axis=1), rank


def _errors(var_diag, rank, n, sse, scale):
    dof = n - rank
    if dof <= 0:
        return np.full(var_diag.shape, np.inf)
    return np.sqrt(np.maximum(var_diag * (sse / dof), 0.0)) / scale


def _standard_errors(Ds, scale, sse, columns) -> np.ndarray:
    """Standard errors in original units for ``columns``; zeros elsewhere."""
    n, p = Ds.shape
    se = np.zeros(p)
    if not columns:
        return se
    _, var_diag, rank = _solve_and_errors(Ds[:, columns], np.zeros(n))
    se[columns] = _errors(var_diag, rank, n, sse, scale[columns])
    return se


def _diagnostics(D, y, coef, se, warn) -> FitDiagnostics:
    resid = y - D @ coef
    sse = float(resid @ resid)
    if callable(se):
        # Exact fits leave only rounding noise; floor it so spurious terms stay insignificant.
        se = se(max(sse, (_ROUNDING * _EPS) ** 2 * float(y @ y)))
    return FitDiagnostics(
        sse=sse,
        r_squared=_r_squared_or_degenerate(sse, y),
        n_rows=int(y.size),
        standard_errors=tuple(float(s) for s in se),
        condition_warning=bool(warn),
    )


def fit_ls(design, y) -> tuple[np.ndarray, FitDiagnostics]:
    """Ordinary least squares; minimum-norm solution if rank deficient."""
    D, y = _check_problem(design, y)
    Ds, scale = _unit_rms(D)
    coef_s, var_diag, rank = _solve_and_errors(Ds, y)
    coef = coef_s / scale
    n, p = D.shape
    return coef, _diagnostics(
        D, y, coef, lambda sse: _errors(var_diag, rank, n, sse, scale), rank < p
    )


def nnls_active_set(A, b, free: Sequence[int] = (), maxiter: Optional[int] = None):
    """Lawson-Hanson active-set solver for ``min ||Ax - b||`` with ``x_j >= 0``.

    Columns listed in ``free`` are unconstrained and stay in the passive set
    throughout. Returns the solution vector.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    free_mask = np.zeros(n, dtype=bool)
    free_mask[list(free)] = True
    if maxiter is None:
        maxiter = 30 * max(n, 1)
    tol = 10 * _EPS * max(A.shape) * max(1.0, np.linalg.norm(A, 1)) * max(1.0, np.abs(b).max(initial=0.0))

    passive = free_mask.copy()
    x = np.zeros(n)

    def solve(mask):
        z = np.zeros(n)
        if mask.any():
            z[mask] = np.linalg.lstsq(A[:, mask], b, rcond=None)[0]
        return z

    if passive.any():
        x = solve(passive)

    for _ in range(maxiter):
        w = A.T @ (b - A @ x)
        candidates = ~passive & (w > tol)
        if not candidates.any():
            break
        t = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[t] = True
        for _ in range(maxiter):
            z = solve(passive)
            infeasible = passive & ~free_mask & (z <= 0)
            if not infeasible.any():
                x = z
                break
            # Step from x towards z until the first constrained entry hits zero.
            idx = np.flatnonzero(infeasible)
            denom = x[idx] - z[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(denom > 0, x[idx] / denom, 0.0)
            alpha = float(np.clip(steps.min(), 0.0, 1.0))
            x = x + alpha * (z - x)
            drop = passive & ~free_mask & (x <= 0.0)
            drop[idx[steps <= alpha]] = True
            drop &= ~free_mask
            x[drop] = 0.0
            passive &= ~drop
        else:
            break
    x[~free_mask] = np.maximum(x[~free_mask], 0.0)
    return x


def fit_nnls(design, y, free: Sequence[int] = ()) -> tuple[np.ndarray, FitDiagnostics]:
    """Least squares with non-negative coefficients (except ``free`` columns)."""
    D, y = _check_problem(design, y)
    Ds, scale = _unit_rms(D)
    coef = nnls_active_set(Ds, y, free=free) / scale
    free_set = set(free)
    columns = [j for j in range(D.shape[1]) if coef[j] > 0 or j in free_set]
    warn = _rank(Ds[:, columns]) < len(columns) if columns else False
    return coef, _diagnostics(
        D, y, coef, lambda sse: _standard_errors(Ds, scale, sse, columns), warn
    )


def _fit_terms(T: np.ndarray, y: np.ndarray, options: FitOptions):
    """Fit term columns ``T`` (plus bias if requested); returns coefs, bias, diagnostics."""
    n, m = T.shape
    if options.bias:
        D = np.hstack([T, np.ones((n, 1))])
    else:
        D = T
    if D.shape[1] == 0:
        sse = float(y @ y)
        diag = FitDiagnostics(sse=sse, r_squared=_r_squared_or_degenerate(sse, y), n_rows=n)
        return (), None, diag
    if options.mode is FitMode.NON_NEGATIVE:
        coef, diag = fit_nnls(D, y, free=[m] if options.bias else [])
    else:
        coef, diag = fit_ls(D, y)
    se = diag.standard_errors
    if options.bias:
        diag = FitDiagnostics(
            sse=diag.sse, r_squared=diag.r_squared, n_rows=diag.n_rows,
            standard_errors=se[:m], bias_standard_error=se[m],
            condition_warning=diag.condition_warning,
        )
        return tuple(coef[:m]), float(coef[m]), diag
    return tuple(coef), None, diag


def significance_ratios(model: FittedModel) -> list[float]:
    """``|a_j| / se_j`` per term (``inf`` for exact, nonzero terms)."""
    out = []
    for a, se in zip(model.coefficients, model.fit.standard_errors):
        if math.isnan(se) or math.isinf(se):
            out.append(0.0)
        elif se == 0.0:
            out.append(math.inf if a != 0.0 else 0.0)
        else:
            out.append(abs(a) / se)
    return out


def _with_pruned(diag: FitDiagnostics, pruned) -> FitDiagnostics:
    return FitDiagnostics(
        sse=diag.sse, r_squared=diag.r_squared, n_rows=diag.n_rows,
        standard_errors=diag.standard_errors, bias_standard_error=diag.bias_standard_error,
        pruned_terms=tuple(pruned), condition_warning=diag.condition_warning,
    )


def fit_terms(structure: ExponentMatrix, T: np.ndarray, y: np.ndarray,
              options: FitOptions, prune: bool = True) -> FittedModel:
    """Fit precomputed term columns and optionally prune insignificant terms."""
    coefs, bias, diag = _fit_terms(T, y, options)
    model = FittedModel(structure, coefs, bias, diag)
    if prune:
        model = _prune(model, T, y, options)
    return model


def _prune(model: FittedModel, T, y, options: FitOptions) -> FittedModel:
    original = list(range(model.structure.n_terms))
    pruned = list(model.fit.pruned_terms)
    keep = list(range(T.shape[1]))
    for _ in range(options.max_prune_iterations):
        if model.structure.n_terms == 0:
            break
        ratios = significance_ratios(model)
        j = int(np.argmin(ratios))
        if ratios[j] >= options.significance_multiplier:
            break
        pruned.append(original.pop(j))
        del keep[j]
        structure = model.structure.drop_rows([j])
        coefs, bias, diag = _fit_terms(T[:, keep], y, options)
        model = FittedModel(structure, coefs, bias, diag)
    return FittedModel(model.structure, model.coefficients, model.bias,
                       _with_pruned(model.fit, pruned))


def _view_arrays(view, dataset, structure: ExponentMatrix):
    cols = [dataset.column_index(n) for n in structure.variable_names]
    X = dataset.values[np.ix_(view.row_indices, cols)]
    return term_columns(X, structure.as_array()), view.target_vector(dataset)


def fit_model(structure: ExponentMatrix, view, dataset, options: FitOptions,
              prune: bool = True) -> FittedModel:
    """Fit ``structure`` on the view's complete cases."""
    T, y = _view_arrays(view, dataset, structure)
    return fit_terms(structure, T, y, options, prune=prune)


def prune_insignificant(model: FittedModel, view, dataset, options: FitOptions) -> FittedModel:
    """Drop the least significant term while ``|a|/se < multiplier``, refitting each time.

    The bias is never removed, so a model may end up bias-only.
    """
    if model.fit is None:
        raise RegressionError("model has no fit diagnostics to prune from")
    T, y = _view_arrays(view, dataset, model.structure)
    return _prune(model, T, y, options)
