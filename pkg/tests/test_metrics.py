import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epr.dataset import Dataset, VariableSpec
from epr.metrics import (
    MEAN_ERROR,
    CorrelationMatrix,
    MetricError,
    compare_correlations,
    correlation_matrix,
    mean_abs_correlation,
    pearson,
)
from oracles import pearson_steps, relative_errors_steps


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0, abs=1e-15)
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, rel=1e-15)


def test_pearson_rejects_constant():
    with pytest.raises(MetricError):
        pearson([1, 1, 1], [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3),
       st.floats(-50, 50))
def test_pearson_affine_equivariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=30), rng.normal(size=30)
    assert pearson(a * x + b, y) == pytest.approx(math.copysign(1, a) * pearson(x, y), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pearson_matches_steps_and_is_bounded(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=25)
    y = 0.3 * x + rng.normal(size=25)
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(pearson_steps(x.tolist(), y.tolist()), rel=1e-12)
    assert pearson(y, x) == r


def dataset(columns):
    names = list(columns)
    return Dataset(tuple(VariableSpec(n, "micro") for n in names),
                   np.column_stack([np.asarray(columns[n], float) for n in names]))


def test_correlation_matrix_examples():
    rng = np.random.default_rng(0)
    x = rng.normal(size=2000)
    ds = dataset({"x": x, "neg": -x, "noise": rng.normal(size=2000), "twice": 2 * x})
    m = correlation_matrix(ds, ["x", "neg", "noise", "twice"])
    assert m.get("x", "neg") == pytest.approx(-1.0, abs=1e-12)
    assert m.get("x", "twice") == pytest.approx(1.0, abs=1e-12)
    assert abs(m.get("x", "noise")) < 0.1
    assert np.array_equal(m.values, m.values.T)
    assert np.all(np.diag(m.values) == 1.0)


def test_n_pairs_follow_overlap():
    nan = math.nan
    ds = dataset({
        "p": [1, 2, 3, nan, 5, 6],
        "q": [2, nan, 1, 4, 7, 3],
        "r": [nan, 1, 2, 3, 4, nan],
    })
    m = correlation_matrix(ds, ["p", "q", "r"])
    assert m.n_pairs.tolist() == [[5, 4, 3], [4, 5, 3], [3, 3, 4]]
    assert m.mode == "pairwise"
    lw = correlation_matrix(ds, ["p", "q", "r"], listwise=True)
    assert lw.n_pairs.tolist() == [[2, 2, 2]] * 3
    assert lw.mode == "listwise"


def test_pair_without_overlap_is_named():
    nan = math.nan
    ds = dataset({"p": [1, 2, nan, nan], "q": [nan, nan, 1, 2]})
    with pytest.raises(MetricError, match=r"\(p, q\)"):
        correlation_matrix(ds, ["p", "q"])


def test_mean_abs_correlation_examples():
    names = ("t", "u", "v")
    m = CorrelationMatrix(names, np.array([[1, 1, -1], [1, 1, -1], [-1, -1, 1.0]]), np.ones((3, 3)))
    assert mean_abs_correlation(m, "t", ["u", "v"]) == 1.0
    z = CorrelationMatrix(names, np.eye(3), np.ones((3, 3)))
    assert mean_abs_correlation(z, "t", ["u", "v"]) == 0.0


def matrix(values, names=("p", "q", "r")):
    return CorrelationMatrix(tuple(names), np.array(values, float), np.ones((3, 3), int))


def test_compare_examples():
    e = matrix([[1, 0.2, 0], [0.2, 1, 0], [0, 0, 1]])
    t = matrix([[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]])
    c = compare_correlations(e, t)
    assert c.relative_errors[0, 1] == pytest.approx(0.3, rel=1e-12)
    assert c.mean_relative_error == pytest.approx(0.1, rel=1e-12)
    assert compare_correlations(e, e).mean_relative_error == 0.0
    plus = matrix([[1, 1, 1], [1, 1, 1], [1, 1, 1]])
    minus = matrix([[1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
    assert compare_correlations(plus, minus).mean_relative_error == 2.0
    assert MEAN_ERROR == 1.0


def test_compare_rejects_mismatched_names():
    with pytest.raises(MetricError):
        compare_correlations(matrix(np.eye(3)), matrix(np.eye(3), names=("p", "q", "s")))


def random_corr(rng, k):
    A = rng.normal(size=(k + 3, k))
    return np.corrcoef(A, rowvar=False)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_compare_matches_steps_symmetric_and_bounded(seed, k):
    rng = np.random.default_rng(seed)
    names = tuple(f"v{i}" for i in range(k))
    e = CorrelationMatrix(names, random_corr(rng, k), np.ones((k, k), int))
    t = CorrelationMatrix(names, random_corr(rng, k), np.ones((k, k), int))
    c = compare_correlations(e, t)
    err, mean = relative_errors_steps(e.values.tolist(), t.values.tolist())
    np.testing.assert_allclose(c.relative_errors, err, rtol=1e-12, atol=0)
    assert c.mean_relative_error == pytest.approx(mean, rel=1e-12)
    assert compare_correlations(t, e).mean_relative_error == pytest.approx(c.mean_relative_error, rel=1e-15)
    assert 0.0 <= c.mean_relative_error <= 2.0
    assert compare_correlations(e, e).mean_relative_error == 0.0
