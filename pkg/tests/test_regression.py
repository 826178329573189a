import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epr.dataset import Dataset, VariableSpec, complete_cases
from epr.expression import ExponentMatrix
from epr.regression import (
    FitMode,
    FitOptions,
    RegressionError,
    fit_ls,
    fit_model,
    fit_nnls,
    prune_insignificant,
    r_squared,
    significance_ratios,
)
from oracles import kkt_violation, nnls_enumerate, nnls_projected_gradient, objective, r_squared_steps


def test_fit_ls_examples():
    a, d = fit_ls([[1], [2], [3]], [2, 4, 6])
    assert a == pytest.approx([2.0], rel=1e-14)
    assert d.sse == pytest.approx(0.0, abs=1e-24)

    a, d = fit_ls([[1], [1]], [0, 2])
    assert a == pytest.approx([1.0])
    assert d.sse == pytest.approx(2.0)


def test_fit_ls_rank_deficient_warns_and_fits():
    a, d = fit_ls([[1, 1], [1, 1]], [1, 1])
    assert d.condition_warning
    np.testing.assert_allclose(np.array([[1, 1], [1, 1]]) @ a, [1, 1], rtol=1e-12)
    # minimum-norm convention splits the weight evenly
    np.testing.assert_allclose(a, [0.5, 0.5], rtol=1e-12)


def test_fit_ls_refuses_underdetermined():
    with pytest.raises(RegressionError):
        fit_ls([[1, 2]], [1])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 15))
def test_fit_ls_residual_is_orthogonal(seed, p, extra):
    rng = np.random.default_rng(seed)
    n = p + extra + 1
    D = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    a, d = fit_ls(D, y)
    r = y - D @ a
    for j in range(p):
        col = D[:, j]
        assert abs(col @ r) <= 1e-8 * np.linalg.norm(y) * np.linalg.norm(col)
    assert d.sse == pytest.approx(float(r @ r), rel=1e-12, abs=1e-24)


def test_fit_nnls_examples():
    a, d = fit_nnls([[1], [2]], [-1, -2])
    assert a == pytest.approx([0.0])
    assert d.sse == pytest.approx(5.0)
    # 1-D grid oracle agrees that zero is the constrained optimum
    grid = np.linspace(0, 5, 5001)
    assert grid[np.argmin([(g + 1) ** 2 + (2 * g + 2) ** 2 for g in grid])] == 0.0

    a, _ = fit_nnls([[1], [2], [3]], [2, 4, 6])
    assert a == pytest.approx([2.0], rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fit_nnls_matches_oracles_and_kkt(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(5, 3))
    b = rng.normal(size=5)
    a, d = fit_nnls(A, b)
    _, f_enum = nnls_enumerate(A, b)
    _, f_pg = nnls_projected_gradient(A, b)
    f = objective(A, b, a)
    assert np.all(a >= 0)
    assert abs(f - f_enum) <= 1e-6 * max(1.0, f_enum)
    assert abs(f - f_pg) <= 1e-6 * max(1.0, f_pg)
    on_pos, on_zero = kkt_violation(A, b, a)
    assert on_pos <= 1e-6 and on_zero <= 1e-6


def test_fit_nnls_free_column_may_go_negative():
    x = np.arange(1.0, 11.0)
    A = np.column_stack([x, np.ones_like(x)])
    y = 2.0 * x - 5.0
    a, d = fit_nnls(A, y, free=[1])
    np.testing.assert_allclose(a, [2.0, -5.0], rtol=1e-10)
    assert d.sse == pytest.approx(0.0, abs=1e-18)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_nnls_never_beats_ls(seed, p):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(12, p))
    b = rng.normal(size=12)
    a_ls, d_ls = fit_ls(A, b)
    a_nn, d_nn = fit_nnls(A, b)
    assert d_nn.sse >= d_ls.sse - 1e-10 * max(1.0, d_ls.sse)
    if np.all(a_ls >= 0):
        assert d_nn.sse == pytest.approx(d_ls.sse, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_adding_a_column_never_increases_sse(seed, p):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(15, p + 1))
    b = rng.normal(size=15)
    _, small = fit_ls(A[:, :p], b)
    _, big = fit_ls(A, b)
    assert big.sse <= small.sse + 1e-10 * max(1.0, small.sse)


def test_r_squared_examples():
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_squared([2, 2, 2], [1, 2, 3]) == 0.0
    assert r_squared([1, 2], [1, 3]) == pytest.approx(0.5, rel=1e-15)
    assert r_squared([3, 2, 1], [1, 2, 3]) < 0
    with pytest.raises(RegressionError):
        r_squared([1, 1], [2, 2])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_r_squared_permutation_invariant_and_matches_steps(seed):
    rng = np.random.default_rng(seed)
    actual = rng.normal(size=20)
    pred = actual + rng.normal(scale=0.5, size=20)
    perm = rng.permutation(20)
    r = r_squared(pred, actual)
    assert r_squared(pred[perm], actual[perm]) == pytest.approx(r, rel=1e-12)
    assert r == pytest.approx(r_squared_steps(pred.tolist(), actual.tolist()), rel=1e-12)


def _dataset(columns: dict):
    names = list(columns)
    return Dataset(tuple(VariableSpec(n, "micro") for n in names),
                   np.column_stack([columns[n] for n in names]))


def test_pruning_drops_the_noise_term():
    rng = np.random.default_rng(11)
    n = 200
    x1 = rng.uniform(1, 3, n)
    x2 = rng.uniform(1, 3, n)
    y = 4.0 * x1 + 1.0 + rng.normal(scale=0.05, size=n)
    ds = _dataset({"x1": x1, "x2": x2, "y": y})
    view = complete_cases(ds, "y", ["x1", "x2"])
    structure = ExponentMatrix(((1, 0), (0, 1)), ("x1", "x2"))
    options = FitOptions()
    full = fit_model(structure, view, ds, options, prune=False)
    ratios = significance_ratios(full)
    assert ratios[0] > 10 and ratios[1] < 2.0
    pruned = prune_insignificant(full, view, ds, options)
    assert pruned.structure.exponents == ((1.0, 0.0),)
    assert pruned.fit.pruned_terms == (1,)
    assert pruned.coefficients[0] == pytest.approx(4.0, rel=0.01)
    refit = fit_model(pruned.structure, view, ds, options, prune=False)
    assert pruned.coefficients == pytest.approx(refit.coefficients, rel=1e-12)


def test_pruning_keeps_significant_terms():
    rng = np.random.default_rng(5)
    x1, x2 = rng.uniform(1, 3, 100), rng.uniform(1, 3, 100)
    y = 2.0 * x1 + 3.0 / x2 + rng.normal(scale=0.01, size=100)
    ds = _dataset({"x1": x1, "x2": x2, "y": y})
    view = complete_cases(ds, "y", ["x1", "x2"])
    s = ExponentMatrix(((1, 0), (0, -1)), ("x1", "x2"))
    full = fit_model(s, view, ds, FitOptions(), prune=False)
    again = prune_insignificant(full, view, ds, FitOptions())
    assert again.structure == full.structure
    assert again.coefficients == full.coefficients


@pytest.mark.parametrize("seed", range(5))
def test_pure_noise_prunes_to_bias(seed):
    rng = np.random.default_rng(seed)
    x1, x2 = rng.uniform(1, 3, 100), rng.uniform(1, 3, 100)
    ds = _dataset({"x1": x1, "x2": x2, "y": rng.normal(size=100)})
    view = complete_cases(ds, "y", ["x1", "x2"])
    s = ExponentMatrix(((1, 0), (0, -1), (0.5, 0.5)), ("x1", "x2"))
    full = fit_model(s, view, ds, FitOptions(significance_multiplier=50.0), prune=False)
    pruned = prune_insignificant(full, view, ds, FitOptions(significance_multiplier=50.0))
    assert pruned.structure.n_terms == 0 and pruned.bias is not None
    assert len(pruned.fit.pruned_terms) == 3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 5.0))
def test_pruning_monotone_and_bounded(seed, multiplier):
    rng = np.random.default_rng(seed)
    x1, x2 = rng.uniform(1, 3, 40), rng.uniform(1, 3, 40)
    ds = _dataset({"x1": x1, "x2": x2, "y": x1 + rng.normal(size=40)})
    view = complete_cases(ds, "y", ["x1", "x2"])
    s = ExponentMatrix(((1, 0), (0, 1), (-1, 0.5)), ("x1", "x2"))
    options = FitOptions(significance_multiplier=multiplier, max_prune_iterations=2)
    full = fit_model(s, view, ds, options, prune=False)
    pruned = prune_insignificant(full, view, ds, options)
    assert pruned.n_coefficients <= full.n_coefficients
    assert len(pruned.fit.pruned_terms) <= 2
    assert pruned.structure.n_terms == 3 - len(pruned.fit.pruned_terms)


def test_non_negative_mode_keeps_positive_coefficients():
    rng = np.random.default_rng(2)
    x = rng.uniform(1, 3, 50)
    ds = _dataset({"x": x, "y": 5.0 - 2.0 * x + rng.normal(scale=0.01, size=50)})
    view = complete_cases(ds, "y", ["x"])
    s = ExponentMatrix(((1,),), ("x",))
    options = FitOptions(mode=FitMode.NON_NEGATIVE)
    m = fit_model(s, view, ds, options, prune=False)
    assert m.coefficients[0] == 0.0
    assert m.bias == pytest.approx(float(np.mean(ds.column("y"))), rel=1e-10)


def test_standard_errors_scale_with_noise():
    rng = np.random.default_rng(0)
    n = 400
    x = rng.uniform(1, 3, n)
    eps = rng.normal(size=n)
    s = ExponentMatrix(((1,),), ("x",))
    ses = []
    for sigma in (0.01, 0.02, 0.04):
        ds = _dataset({"x": x, "y": 2.0 * x + 1.0 + sigma * eps})
        m = fit_model(s, complete_cases(ds, "y", ["x"]), ds, FitOptions(), prune=False)
        ses.append(m.fit.standard_errors[0])
    assert ses[1] / ses[0] == pytest.approx(2.0, rel=0.2)
    assert ses[2] / ses[1] == pytest.approx(2.0, rel=0.2)


def test_fit_options_validation():
    with pytest.raises(RegressionError):
        FitOptions(significance_multiplier=0.0)
    with pytest.raises(RegressionError):
        FitOptions(mode="bogus")
    with pytest.raises(RegressionError):
        FitOptions(max_prune_iterations=0)
