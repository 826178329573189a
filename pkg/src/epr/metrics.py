"""Pearson correlations and theoretical-vs-experimental comparisons."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, listwise_rows

# Normalizing error for correlation differences; correlations live in (-1, 1).
MEAN_ERROR = 1.0


class MetricError(ValueError):
    pass


def pearson(x, y) -> float:
    """Sample Pearson correlation, clamped to [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("pearson needs two 1-D vectors of equal length")
    if x.size < 2:
        raise MetricError("pearson needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise MetricError("pearson is undefined for a constant vector")
    r = float(dx @ dy) / (np.sqrt(sxx) * np.sqrt(syy))
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class CorrelationMatrix:
    variable_names: tuple[str, ...]
    values: np.ndarray
    n_pairs: np.ndarray
    mode: str = "pairwise"

    def index(self, name: str) -> int:
        try:
            return self.variable_names.index(name)
        except ValueError:
            raise MetricError(f"{name!r} is not in the correlation matrix") from None

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.index(a), self.index(b)])


def correlation_matrix(dataset: Dataset, variables: Sequence[str],
                       row_indices: Optional[Sequence[int]] = None,
                       listwise: bool = False) -> CorrelationMatrix:
    """Pearson matrix over ``variables``.

    Each pair uses the rows where both variables are present (pairwise
    complete). With ``listwise`` the rows are first restricted to those where
    every listed variable is present; ``row_indices`` restricts rows up front.
    """
    variables = tuple(variables)
    data = dataset if row_indices is None else dataset.take(row_indices)
    if listwise:
        rows = listwise_rows(data, variables)
        if len(rows) < 2:
            raise MetricError(f"only {len(rows)} complete rows over {list(variables)}")
        data = data.take(rows)
    k = len(variables)
    values = np.eye(k)
    counts = np.zeros((k, k), dtype=int)
    cols = [data.column(v) for v in variables]
    for i in range(k):
        counts[i, i] = int(np.sum(~np.isnan(cols[i])))
        for j in range(i + 1, k):
            both = ~np.isnan(cols[i]) & ~np.isnan(cols[j])
            n = int(both.sum())
            if n < 2:
                raise MetricError(
                    f"pair ({variables[i]}, {variables[j]}) has {n} complete rows; need 2"
                )
            try:
                r = pearson(cols[i][both], cols[j][both])
            except MetricError as exc:
                raise MetricError(f"pair ({variables[i]}, {variables[j]}): {exc}") from None
            values[i, j] = values[j, i] = r
            counts[i, j] = counts[j, i] = n
    values.setflags(write=False)
    counts.setflags(write=False)
    return CorrelationMatrix(variables, values, counts, "listwise" if listwise else "pairwise")


def mean_abs_correlation(matrix: CorrelationMatrix, target: str, inputs: Sequence[str]) -> float:
    """Mean of ``|rho(target, input)|`` over the inputs."""
    if not inputs:
        raise MetricError("no inputs given")
    return float(np.mean([abs(matrix.get(target, name)) for name in inputs]))


@dataclass(frozen=True)
class CorrelationComparison:
    experimental: CorrelationMatrix
    theoretical: CorrelationMatrix
    relative_errors: np.ndarray
    mean_relative_error: float


def compare_correlations(experimental: CorrelationMatrix,
                         theoretical: CorrelationMatrix) -> CorrelationComparison:
    """Elementwise ``|rho_t - rho_e| / MEAN_ERROR`` and its off-diagonal mean."""
    if experimental.variable_names != theoretical.variable_names:
        raise MetricError(
            f"variable lists differ: {experimental.variable_names} vs {theoretical.variable_names}"
        )
    err = np.abs(theoretical.values - experimental.values) / MEAN_ERROR
    k = err.shape[0]
    upper = np.triu_indices(k, 1)
    mean = float(err[upper].mean()) if k > 1 else 0.0
    err.setflags(write=False)
    return CorrelationComparison(experimental, theoretical, err, mean)
