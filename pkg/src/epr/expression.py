"""Pseudo-polynomial model structures.

A structure is an ``m x k`` matrix of exponents: row ``j`` describes the
power-product term ``prod_i x_i ** e_ji``. A fitted model attaches one linear
coefficient per row plus an optional bias::

    y = a_0 + sum_j a_j * prod_i x_i ** e_ji

An exponent of zero removes the variable from the term; ``0 ** 0`` is never
computed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

DEFAULT_EXPONENTS = (-1.0, -0.5, 0.0, 0.5, 1.0)
TERM_SEP = "·"


class ExpressionError(ValueError):
    pass


class DomainError(ExpressionError):
    """A term cannot be evaluated on the given values (e.g. ``0 ** -1``)."""

    def __init__(self, message, row=None, term=None):
        super().__init__(message)
        self.row = row
        self.term = term


@dataclass(frozen=True)
class CandidateExponents:
    values: tuple[float, ...] = DEFAULT_EXPONENTS

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in values):
            raise ExpressionError("candidate exponents must be finite")
        if 0.0 not in values:
            raise ExpressionError("candidate exponents must include 0 (variable exclusion)")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ExpressionError(f"candidate exponents must be strictly increasing: {values}")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def __contains__(self, x):
        return float(x) in self.values

    @property
    def nonzero(self) -> tuple[float, ...]:
        return tuple(v for v in self.values if v != 0.0)


@dataclass(frozen=True)
class ExponentMatrix:
    """Rows are terms, columns follow ``variable_names``. May have zero rows."""

    exponents: tuple[tuple[float, ...], ...]
    variable_names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.variable_names)
        if not names:
            raise ExpressionError("a structure needs at least one variable")
        if len(set(names)) != len(names):
            raise ExpressionError(f"duplicate variable names {names}")
        rows = tuple(tuple(float(e) + 0.0 for e in row) for row in self.exponents)
        for row in rows:
            if len(row) != len(names):
                raise ExpressionError(
                    f"exponent row {row} has {len(row)} entries for {len(names)} variables"
                )
        object.__setattr__(self, "exponents", rows)
        object.__setattr__(self, "variable_names", names)

    @classmethod
    def empty(cls, variable_names: Sequence[str]) -> "ExponentMatrix":
        return cls((), tuple(variable_names))

    @property
    def n_terms(self) -> int:
        return len(self.exponents)

    @property
    def n_variables(self) -> int:
        return len(self.variable_names)

    @property
    def used_variables(self) -> tuple[str, ...]:
        """Variables with a nonzero exponent in some term, in column order."""
        return tuple(
            name for i, name in enumerate(self.variable_names)
            if any(row[i] != 0.0 for row in self.exponents)
        )

    @property
    def n_inputs(self) -> int:
        return len(self.used_variables)

    def as_array(self) -> np.ndarray:
        return np.array(self.exponents, dtype=float).reshape(self.n_terms, self.n_variables)

    def check(self, candidates: CandidateExponents, max_terms: int) -> None:
        if self.n_terms > max_terms:
            raise ExpressionError(f"{self.n_terms} terms exceed the maximum of {max_terms}")
        for row in self.exponents:
            bad = [e for e in row if e not in candidates]
            if bad:
                raise ExpressionError(f"exponents {bad} are not candidate exponents")

    def drop_rows(self, indices) -> "ExponentMatrix":
        drop = set(indices)
        return ExponentMatrix(
            tuple(r for j, r in enumerate(self.exponents) if j not in drop), self.variable_names
        )


def _power(x: float, e: float) -> float:
    if e == 1.0:
        return x
    if e == 0.5:
        return math.sqrt(x)
    if e == -1.0:
        return 1.0 / x
    if e == -0.5:
        return 1.0 / math.sqrt(x)
    return x ** e


def _needs_positive(e: float) -> bool:
    return e < 0 or e != int(e)


def term_value(record: Mapping[str, float], exponent_row: Sequence[float],
               variable_names: Sequence[str]) -> float:
    """Product of ``record[name] ** exponent`` over variables with nonzero exponent."""
    value = 1.0
    for name, e in zip(variable_names, exponent_row):
        e = float(e)
        if e == 0.0:
            continue
        x = record.get(name)
        if x is None or (isinstance(x, float) and math.isnan(x)):
            raise DomainError(f"no value for {name!r}, which has exponent {e:g}")
        x = float(x)
        if _needs_positive(e) and x <= 0:
            raise DomainError(f"{name}={x!r} cannot be raised to the power {e:g}")
        value *= _power(x, e)
    return value


def term_columns(X: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """Evaluate each exponent row over the rows of ``X`` (shape ``n x k``).

    Returns an ``n x m`` array. Raises :class:`DomainError` naming the first
    offending (row, term) pair.
    """
    X = np.asarray(X, dtype=float)
    exponents = np.asarray(exponents, dtype=float).reshape(-1, X.shape[1])
    out = np.ones((X.shape[0], exponents.shape[0]))
    for j, row in enumerate(exponents):
        out[:, j] = term_column(X, row, term_index=j)
    return out


def term_column(X: np.ndarray, row: Sequence[float], term_index: int = 0) -> np.ndarray:
    col = np.ones(X.shape[0])
    for i, e in enumerate(row):
        e = float(e)
        if e == 0.0:
            continue
        x = X[:, i]
        bad = np.isnan(x) | ((x <= 0) if _needs_positive(e) else np.zeros_like(x, dtype=bool))
        if bad.any():
            r = int(np.flatnonzero(bad)[0])
            raise DomainError(
                f"term {term_index}: row {r} value {x[r]!r} cannot be raised to the power {e:g}",
                row=r, term=term_index,
            )
        if e == 1.0:
            col = col * x
        elif e == 0.5:
            col = col * np.sqrt(x)
        elif e == -1.0:
            col = col / x
        elif e == -0.5:
            col = col / np.sqrt(x)
        else:
            col = col * np.power(x, e)
    return col


def design_matrix(view, dataset, structure: ExponentMatrix, bias: bool) -> np.ndarray:
    """``n x (m [+1])`` matrix of term values on the view's rows.

    Columns follow the structure's rows; with ``bias`` a trailing column of
    ones is appended.
    """
    cols = [dataset.column_index(n) for n in structure.variable_names]
    X = dataset.values[np.ix_(view.row_indices, cols)]
    try:
        D = term_columns(X, structure.as_array())
    except DomainError as exc:
        row = view.row_indices[exc.row]
        raise DomainError(
            f"term {exc.term} (exponents {structure.exponents[exc.term]}) "
            f"is not evaluable at dataset row {row}",
            row=row, term=exc.term,
        ) from None
    if bias:
        D = np.hstack([D, np.ones((D.shape[0], 1))])
    return D


def canonicalize(structure: ExponentMatrix) -> ExponentMatrix:
    """Drop all-zero and duplicate rows, then sort rows lexicographically."""
    rows = {row for row in structure.exponents if any(e != 0.0 for e in row)}
    return ExponentMatrix(tuple(sorted(rows)), structure.variable_names)


@dataclass(frozen=True)
class FitDiagnostics:
    """Fit statistics for a coefficient vector.

    ``standard_errors`` has one entry per term; the bias error is kept apart.
    ``pruned_terms`` indexes rows of the structure *before* pruning.
    """

    sse: float
    r_squared: float
    n_rows: int
    standard_errors: tuple[float, ...] = ()
    bias_standard_error: Optional[float] = None
    pruned_terms: tuple[int, ...] = ()
    condition_warning: bool = False


@dataclass(frozen=True)
class FittedModel:
    structure: ExponentMatrix
    coefficients: tuple[float, ...]
    bias: Optional[float] = None
    fit: Optional[FitDiagnostics] = field(default=None, compare=False)

    def __post_init__(self):
        coefficients = tuple(float(c) for c in self.coefficients)
        if len(coefficients) != self.structure.n_terms:
            raise ExpressionError(
                f"{len(coefficients)} coefficients for {self.structure.n_terms} terms"
            )
        object.__setattr__(self, "coefficients", coefficients)
        if self.bias is not None:
            object.__setattr__(self, "bias", float(self.bias))

    @property
    def n_coefficients(self) -> int:
        return self.structure.n_terms + (self.bias is not None)

    @property
    def n_inputs(self) -> int:
        return self.structure.n_inputs

    @property
    def used_variables(self) -> tuple[str, ...]:
        return self.structure.used_variables

    def evaluate(self, record: Mapping[str, float]) -> float:
        return evaluate(self, record)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on columns ordered like ``structure.variable_names``."""
        X = np.asarray(X, dtype=float)
        D = term_columns(X, self.structure.as_array())
        y = D @ np.array(self.coefficients) if self.coefficients else np.zeros(X.shape[0])
        return y + (self.bias or 0.0)

    def with_structure_order(self, structure: ExponentMatrix) -> "FittedModel":
        """Reattach coefficients to a permutation of this model's rows."""
        lookup = dict(zip(self.structure.exponents, self.coefficients))
        try:
            coefs = tuple(lookup[row] for row in structure.exponents)
        except KeyError as exc:
            raise ExpressionError(f"row {exc.args[0]} is not part of this model") from None
        return replace(self, structure=structure, coefficients=coefs)


def evaluate(model: FittedModel, record: Mapping[str, float]) -> float:
    total = 0.0
    names = model.structure.variable_names
    for a, row in zip(model.coefficients, model.structure.exponents):
        total += a * term_value(record, row, names)
    return total + (model.bias or 0.0)


def _format_exponent(e: float) -> str:
    return format(e, "g")


def _factor(name: str, e: float) -> str:
    return name if e == 1.0 else f"{name}^{_format_exponent(e)}"


def _monomial(row: Sequence[float], names: Sequence[str]) -> tuple[str, str]:
    num = [_factor(n, e) for n, e in zip(names, row) if e > 0]
    den = [_factor(n, -e) for n, e in zip(names, row) if e < 0]
    numerator = TERM_SEP.join(num)
    if not den:
        denominator = ""
    elif len(den) == 1:
        denominator = den[0]
    else:
        denominator = "(" + TERM_SEP.join(den) + ")"
    return numerator, denominator


def _term(coef: str, row: Sequence[float], names: Sequence[str]) -> str:
    numerator, denominator = _monomial(row, names)
    out = coef
    if numerator:
        out += TERM_SEP + numerator
    if denominator:
        out += "/" + denominator
    return out


def _significant(text: str) -> int:
    mantissa = text.split("e")[0].replace("-", "").replace(".", "").lstrip("0")
    return len(mantissa)


def _number(x: float, precision: int, decimals: int) -> str:
    """The longer of ``precision`` significant digits and ``decimals`` decimals."""
    by_digits = format(x, f".{precision}g")
    by_decimals = format(x, f".{decimals}f")
    if "." in by_decimals:
        by_decimals = by_decimals.rstrip("0").rstrip(".")
    if _significant(by_decimals) > _significant(by_digits):
        return by_decimals
    return by_digits


def render(model: FittedModel, precision: int = 5, decimals: int = 4) -> str:
    """Human-readable expression, e.g. ``3.5562/b + 0.10262``.

    Coefficients keep at least ``precision`` significant digits and at least
    ``decimals`` decimal places (``29.2668``, ``0.0047393``). Terms follow the
    structure's row order; negative exponents go to a denominator; the bias
    comes last.
    """
    names = model.structure.variable_names
    parts = []
    for a, row in zip(model.coefficients, model.structure.exponents):
        parts.append((a < 0, _term(_number(abs(a), precision, decimals), row, names)))
    if model.bias is not None:
        parts.append((model.bias < 0, _number(abs(model.bias), precision, decimals)))
    if not parts:
        return "0"
    negative, text = parts[0]
    out = ("-" if negative else "") + text
    for negative, text in parts[1:]:
        out += (" - " if negative else " + ") + text
    return out


def render_symbolic(structure: ExponentMatrix, bias: bool = True, prefix: str = "a") -> str:
    """Expression with symbolic coefficients ``a0 + a1·... + a2·...``."""
    names = structure.variable_names
    parts = [f"{prefix}0"] if bias else []
    parts += [_term(f"{prefix}{j}", row, names) for j, row in enumerate(structure.exponents, 1)]
    return " + ".join(parts) if parts else "0"
