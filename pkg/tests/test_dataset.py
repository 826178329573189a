import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epr.dataset import (
    Dataset,
    DatasetError,
    EmptyViewError,
    Tier,
    VariableSpec,
    complete_cases,
    listwise_rows,
    load_dataset,
    tier_variables,
)
from epr.silk import SCHEMA


def specs(*names, tier="micro"):
    return [VariableSpec(n, tier) for n in names]


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_marks_empty_cells_missing(tmp_path):
    ds = load_dataset(write(tmp_path, "a,b,c\n10,40,8\n12,,9\n"), specs("a", "b", "c"))
    assert ds.n_rows == 2
    assert ds.rows[0] == {"a": 10.0, "b": 40.0, "c": 8.0}
    assert ds.rows[1]["b"] is None
    assert ds.rows[1]["c"] == 9.0


def test_load_rejects_duplicate_header(tmp_path):
    with pytest.raises(DatasetError, match="duplicate header"):
        load_dataset(write(tmp_path, "a,a,c\n1,2,3\n"), specs("a", "c"))


def test_load_reports_row_and_column_of_bad_cell(tmp_path):
    with pytest.raises(DatasetError, match=r"row 1, column 'a'"):
        load_dataset(write(tmp_path, "a,b,c\nabc,2,3\n"), specs("a", "b", "c"))


def test_load_rejects_unknown_column(tmp_path):
    with pytest.raises(DatasetError, match="unknown column"):
        load_dataset(write(tmp_path, "a,z\n1,2\n"), specs("a"))


def test_load_rejects_non_finite_cells(tmp_path):
    with pytest.raises(DatasetError, match="non-finite"):
        load_dataset(write(tmp_path, "a,b\n1,inf\n"), specs("a", "b"))


def test_load_custom_sentinel_and_delimiter(tmp_path):
    ds = load_dataset(write(tmp_path, "a;b\n1;NA\n2;3\n"), specs("a", "b"),
                      delimiter=";", missing="NA")
    assert ds.rows[0]["b"] is None
    assert ds.rows[1] == {"a": 2.0, "b": 3.0}


def test_file_column_order_is_authoritative(tmp_path):
    ds = load_dataset(write(tmp_path, "c,a\n1,2\n"), specs("a", "c"))
    assert ds.names == ["c", "a"]


def small():
    return Dataset.from_records(specs("a", "b", "c"), [
        {"a": 1, "b": 2, "c": 3},
        {"a": 1, "b": None, "c": 3},
    ])


def test_complete_cases_examples():
    ds = small()
    assert complete_cases(ds, "c", ["a", "b"]).row_indices == (0,)
    assert complete_cases(ds, "c", ["a"]).row_indices == (0, 1)


def test_complete_cases_all_missing_is_error():
    ds = Dataset.from_records(specs("b", "c"), [{"c": 1.0}, {"c": 2.0}])
    with pytest.raises(EmptyViewError):
        complete_cases(ds, "c", ["b"])


def test_complete_cases_rejects_target_among_inputs():
    with pytest.raises(DatasetError):
        complete_cases(small(), "a", ["a", "b"])


def test_tier_variables():
    assert tier_variables(SCHEMA, Tier.MICRO) == ["a", "b", "c"]
    assert tier_variables(SCHEMA, "macro") == ["𝔸", "𝔹", "ℂ", "𝔻"]
    assert tier_variables(specs("x", "y"), "meso") == []


def test_dataset_is_read_only():
    ds = small()
    with pytest.raises(ValueError):
        ds.values[0, 0] = 5.0


@st.composite
def missing_patterns(draw):
    n_rows = draw(st.integers(1, 12))
    mask = draw(st.lists(st.lists(st.booleans(), min_size=5, max_size=5),
                         min_size=n_rows, max_size=n_rows))
    values = np.where(np.array(mask), np.nan, 1.0)
    return Dataset(tuple(specs("t", "x1", "x2", "x3", "x4")), values)


@settings(max_examples=200, deadline=None)
@given(missing_patterns(), st.sets(st.sampled_from(["x1", "x2", "x3", "x4"]), min_size=1),
       st.sampled_from(["x1", "x2", "x3", "x4"]))
def test_adding_an_input_never_enlarges_rows(ds, inputs, extra):
    inputs = sorted(inputs)
    bigger = sorted(set(inputs) | {extra})

    def rows(names):
        try:
            return set(complete_cases(ds, "t", names).row_indices)
        except EmptyViewError:
            return set()

    assert rows(bigger) <= rows(inputs)
    # maximality: every omitted row really lacks some variable
    expected = {i for i in range(ds.n_rows)
                if all(not math.isnan(ds.values[i, ds.column_index(v)]) for v in ["t", *inputs])}
    assert rows(inputs) == expected


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(0, 3), st.integers(1, 4))
def test_no_missing_keeps_every_row(n_rows, target, n_inputs):
    names = ["v0", "v1", "v2", "v3", "v4"]
    ds = Dataset(tuple(specs(*names)), np.ones((n_rows, 5)))
    t = names[target]
    inputs = [n for n in names if n != t][:n_inputs]
    assert complete_cases(ds, t, inputs).row_indices == tuple(range(n_rows))
    assert listwise_rows(ds, names) == tuple(range(n_rows))
