"""Tabular multiscale data: variable schema with tiers, loading, complete-case views."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

# Marker for an absent measurement in record dicts.
MISSING = None


class DatasetError(ValueError):
    """Raised for malformed tables, schemas or variable references."""


class EmptyViewError(DatasetError):
    """No row has the target and all requested inputs present."""


class Tier(str, enum.Enum):
    MICRO = "micro"
    MESO = "meso"
    MACRO = "macro"


@dataclass(frozen=True)
class VariableSpec:
    name: str
    tier: Tier
    description: str = ""
    unit: str = ""

    def __post_init__(self):
        if not self.name:
            raise DatasetError("variable name must be non-empty")
        try:
            object.__setattr__(self, "tier", Tier(self.tier))
        except ValueError:
            raise DatasetError(
                f"variable {self.name!r}: tier must be one of micro/meso/macro, got {self.tier!r}"
            ) from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of real values with NaN standing for MISSING.

    ``values`` is an ``(n_rows, n_variables)`` float array whose columns follow
    ``variables``. Records handed out by :attr:`rows` use ``None`` for missing
    cells.
    """

    variables: tuple[VariableSpec, ...]
    values: np.ndarray
    source: str = ""
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        if not variables:
            raise DatasetError("dataset needs at least one variable")
        names = [v.name for v in variables]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise DatasetError(f"duplicate variable names: {', '.join(dupes)}")
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.shape[1] != len(variables):
            raise DatasetError(
                f"values must have shape (n_rows, {len(variables)}), got {values.shape}"
            )
        if values.shape[0] == 0:
            raise DatasetError("dataset needs at least one row")
        if np.isinf(values).any():
            raise DatasetError("dataset contains infinite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def from_records(cls, variables: Sequence[VariableSpec], records: Iterable[Mapping],
                     source: str = "") -> "Dataset":
        """Build from dicts; absent keys and ``None`` entries become MISSING."""
        variables = tuple(variables)
        rows = []
        for rec in records:
            unknown = set(rec) - {v.name for v in variables}
            if unknown:
                raise DatasetError(f"record has undeclared variables: {sorted(unknown)}")
            row = []
            for v in variables:
                x = rec.get(v.name, MISSING)
                if x is MISSING:
                    row.append(math.nan)
                else:
                    x = float(x)
                    if not math.isfinite(x):
                        raise DatasetError(f"non-finite value for {v.name!r}: {x}")
                    row.append(x)
            rows.append(row)
        return cls(variables, np.array(rows, dtype=float).reshape(len(rows), len(variables)),
                   source)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def rows(self) -> list[dict]:
        names = self.names
        return [
            {n: (MISSING if math.isnan(x) else float(x)) for n, x in zip(names, row)}
            for row in self.values
        ]

    def spec(self, name: str) -> VariableSpec:
        return self.variables[self.column_index(name)]

    def column_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DatasetError(f"unknown variable {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        """Column values (NaN where missing)."""
        return self.values[:, self.column_index(name)]

    def present(self, name: str) -> np.ndarray:
        return ~np.isnan(self.column(name))

    def take(self, row_indices: Sequence[int]) -> "Dataset":
        """Sub-table with the given rows, preserving order."""
        return Dataset(self.variables, self.values[list(row_indices)], self.source)


@dataclass(frozen=True)
class CaseView:
    """Rows where ``target`` and every input are measured simultaneously."""

    target: str
    inputs: tuple[str, ...]
    row_indices: tuple[int, ...]

    @property
    def n_rows(self) -> int:
        return len(self.row_indices)

    def input_matrix(self, dataset: Dataset) -> np.ndarray:
        cols = [dataset.column_index(n) for n in self.inputs]
        return dataset.values[np.ix_(self.row_indices, cols)]

    def target_vector(self, dataset: Dataset) -> np.ndarray:
        return dataset.column(self.target)[list(self.row_indices)]


def load_dataset(path, schema: Sequence[VariableSpec], delimiter: str = ",",
                 missing: str = "") -> Dataset:
    """Read a delimited UTF-8 table whose header names declared variables.

    Column order in the file decides variable order; tiers and annotations
    come from ``schema``. Cells equal to ``missing`` (after stripping) are
    MISSING; an empty cell is always MISSING.
    """
    path = Path(path)
    by_name = {}
    for spec in schema:
        if spec.name in by_name:
            raise DatasetError(f"schema declares {spec.name!r} twice")
        by_name[spec.name] = spec

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        seen = set()
        for h in header:
            if h in seen:
                raise DatasetError(f"{path}: duplicate header column {h!r}")
            seen.add(h)
        unknown = [h for h in header if h not in by_name]
        if unknown:
            raise DatasetError(f"{path}: unknown column name(s) {unknown}")
        absent = [n for n in by_name if n not in seen]
        if absent:
            raise DatasetError(f"{path}: schema variable(s) missing from header {absent}")

        rows = []
        for lineno, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise DatasetError(
                    f"{path}: row {lineno} has {len(cells)} cells, expected {len(header)}"
                )
            row = []
            for name, cell in zip(header, cells):
                cell = cell.strip()
                if cell == "" or cell == missing:
                    row.append(math.nan)
                    continue
                try:
                    x = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {lineno}, column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(x):
                    raise DatasetError(
                        f"{path}: row {lineno}, column {name!r}: non-finite value {cell!r}"
                    )
                row.append(x)
            rows.append(row)

    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(tuple(by_name[h] for h in header), np.array(rows, dtype=float), str(path))


def complete_cases(dataset: Dataset, target: str, inputs: Sequence[str]) -> CaseView:
    inputs = tuple(inputs)
    if not inputs:
        raise DatasetError("at least one input variable is required")
    if target in inputs:
        raise DatasetError(f"target {target!r} is also listed as an input")
    if len(set(inputs)) != len(inputs):
        raise DatasetError(f"duplicate inputs in {list(inputs)}")
    mask = dataset.present(target)
    for name in inputs:
        mask &= dataset.present(name)
    rows = tuple(int(i) for i in np.flatnonzero(mask))
    if not rows:
        raise EmptyViewError(
            f"no row has {target!r} together with all of {list(inputs)}"
        )
    return CaseView(target, inputs, rows)


def listwise_rows(dataset: Dataset, variables: Sequence[str]) -> tuple[int, ...]:
    """Indices of rows where every listed variable is present."""
    mask = np.ones(dataset.n_rows, dtype=bool)
    for name in variables:
        mask &= dataset.present(name)
    return tuple(int(i) for i in np.flatnonzero(mask))


def tier_variables(dataset_or_schema, tier) -> list[str]:
    """Declared variables of ``tier`` in declaration order.

    Accepts a :class:`Dataset` or a plain sequence of :class:`VariableSpec`.
    """
    tier = Tier(tier)
    variables = getattr(dataset_or_schema, "variables", dataset_or_schema)
    return [v.name for v in variables if v.tier is tier]
