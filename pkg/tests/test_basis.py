import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalglm.basis import (
    LINEAR,
    SPLINE,
    BasisError,
    BasisSpec,
    build_design,
    difference_matrix,
    eval_basis,
    greville,
    raw_bspline,
)
from causalglm.edf import POISSON
from causalglm.fit import fit_glm

from conftest import make_dataset


@pytest.fixture
def data(rng):
    X = rng.normal(size=(300, 4))
    return make_dataset(X, rng.poisson(1.0, 300))


def test_empty_subset_is_intercept_column(data):
    d = build_design(data, (), LINEAR)
    assert d.matrix.shape == (data.n, 1)
    np.testing.assert_array_equal(d.matrix, 1.0)
    assert d.columns == ("(Intercept)",)


def test_linear_columns(data):
    d = build_design(data, (0,), LINEAR)
    np.testing.assert_array_equal(d.matrix[:, 1], data.X[:, 0])
    assert d.q == 2
    assert not d.penalized


def test_spline_q_and_hand_built_penalty(data):
    d = build_design(data, (1, 2), SPLINE)
    assert d.q == 1 + 2 * 8
    assert np.linalg.matrix_rank(d.matrix) == d.q
    np.testing.assert_array_equal(d.penalty[0], 0.0)
    np.testing.assert_array_equal(d.penalty[1:9, 9:], 0.0)
    for block, term in zip((slice(1, 9), slice(9, 17)), d.terms):
        # second differences over Greville points, scaled to the mean spacing
        g = greville(term.knots)
        h = (g[-1] - g[0]) / (len(g) - 1)
        D = np.zeros((len(g) - 2, len(g)))
        for i in range(len(g) - 2):
            a, b, c = g[i:i + 3]
            D[i, i] = 2 * h * h / ((b - a) * (c - a))
            D[i, i + 1] = -2 * h * h / ((b - a) * (c - b))
            D[i, i + 2] = 2 * h * h / ((c - b) * (c - a))
        D = D[:, :-1]
        np.testing.assert_allclose(d.penalty[block, block], D.T @ D, rtol=1e-12, atol=1e-12)


def test_penalty_symmetric_psd(data):
    P = build_design(data, (0, 1, 3), SPLINE).penalty
    np.testing.assert_array_equal(P, P.T)
    assert np.linalg.eigvalsh(P).min() > -1e-10


def test_difference_matrix_equal_spacing_gives_ordinary_differences():
    D = difference_matrix(np.arange(6.0), 2)
    np.testing.assert_allclose(D, np.diff(np.eye(6), n=2, axis=0), atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(x=st.lists(st.floats(-3, 3), min_size=1, max_size=40))
def test_partition_of_unity(x):
    knots = np.concatenate([[-2.0] * 3, np.linspace(-2, 2, 7), [2.0] * 3])
    inside = np.clip(np.asarray(x), -2, 2)
    np.testing.assert_allclose(raw_bspline(inside, knots).sum(axis=1), 1.0, atol=1e-10)
    # linear extension keeps the sum at one outside the knots as well
    np.testing.assert_allclose(raw_bspline(np.asarray(x), knots).sum(axis=1), 1.0, atol=1e-10)


def test_linear_function_in_penalty_null_space(data):
    d = build_design(data, (0,), SPLINE)
    term = d.terms[0]
    g = greville(term.knots)
    for coef in (g, np.ones_like(g), 3 * g - 2):
        # a linear-in-x coefficient vector, expressed in the dropped-column basis
        beta = coef[:-1] - coef[-1]
        P = d.penalty[1:, 1:]
        np.testing.assert_allclose(P @ beta, 0.0, atol=1e-10)


def test_linear_extrapolation_beyond_boundary(data):
    d = build_design(data, (0,), SPLINE)
    hi = data.X[:, 0].max()
    xs = np.array([hi + 1, hi + 2, hi + 3])
    rows = eval_basis(d, {"X1": xs})
    np.testing.assert_allclose(rows[2] - rows[1], rows[1] - rows[0], atol=1e-10)


@pytest.mark.parametrize("spec", [LINEAR, SPLINE])
def test_eval_basis_reproduces_training_matrix(data, spec):
    d = build_design(data, (0, 2), spec)
    np.testing.assert_allclose(eval_basis(d, data), d.matrix, atol=1e-13)


def test_eval_basis_linear_zero_row(data):
    d = build_design(data, (0, 1, 2), LINEAR)
    row = eval_basis(d, {"X1": [0.0], "X2": [0.0], "X3": [0.0]})
    np.testing.assert_array_equal(row, [[1, 0, 0, 0]])


def test_eval_basis_missing_column(data):
    d = build_design(data, (0,), LINEAR)
    with pytest.raises(KeyError):
        eval_basis(d, {"X2": [0.0]})


def test_subset_permutation_leaves_fitted_values(data):
    a = build_design(data, (0, 2), SPLINE)
    b = build_design(data, (2, 0), SPLINE)
    fa = fit_glm(POISSON, a, data.y, lam=1.0)
    fb = fit_glm(POISSON, b, data.y, lam=1.0)
    np.testing.assert_allclose(fa.eta, fb.eta, atol=1e-9)


def test_every_spline_column_depends_on_one_covariate(data):
    d = build_design(data, (0, 1), SPLINE)
    assert all(c.startswith("s(X1)") for c in d.columns[1:9])
    assert all(c.startswith("s(X2)") for c in d.columns[9:])


@pytest.mark.parametrize("subset", [(0, 0), (7,), (-1,)])
def test_bad_subsets(data, subset):
    with pytest.raises(BasisError):
        build_design(data, subset, LINEAR)


def test_too_few_distinct_values(rng):
    data = make_dataset(np.repeat([0.0, 1.0, 2.0], 20), rng.poisson(1, 60))
    with pytest.raises(BasisError):
        build_design(data, (0,), SPLINE)


def test_rank_deficient_linear(rng):
    x = rng.normal(size=50)
    data = make_dataset(np.column_stack([x, 2 * x]), rng.poisson(1, 50))
    with pytest.raises(BasisError):
        build_design(data, (0, 1), LINEAR)


def test_spec_validation():
    with pytest.raises(ValueError):
        BasisSpec("spline", spline_df=2)
