import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adimaxwell.linalg1d import (BandedMatrix, MatrixKind, SingularMatrixError, assemble_1d,
                                 combine_mass_plus_scaled_stiffness, factorize, solve_multi_rhs)
from adimaxwell.splines import KnotVector, gauss_rule, make_open_knot_vector

from conftest import time_best

HATS = KnotVector(1, np.array([0.0, 0.0, 1.0, 2.0, 2.0]))


def test_linear_mass():
    M = assemble_1d(HATS, MatrixKind.MASS).to_dense()
    np.testing.assert_allclose(M, [[1 / 3, 1 / 6, 0], [1 / 6, 2 / 3, 1 / 6], [0, 1 / 6, 1 / 3]], atol=1e-15)


def test_linear_stiffness():
    S = assemble_1d(HATS, "stiffness").to_dense()
    np.testing.assert_allclose(S, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]], atol=1e-15)


@pytest.mark.parametrize("ne,p", [(1, 1), (4, 2), (6, 3), (3, 4)])
def test_advection_integration_by_parts(ne, p):
    kv = make_open_knot_vector(ne, p)
    A = assemble_1d(kv, MatrixKind.ADVECTION_TRIAL_DERIV).to_dense()
    B = assemble_1d(kv, MatrixKind.ADVECTION_TEST_DERIV).to_dense()
    corner = np.zeros_like(A)
    corner[0, 0] = -1
    corner[-1, -1] = 1
    np.testing.assert_allclose(A + A.T, corner, atol=1e-13)
    assert np.array_equal(B, A.T)


@pytest.mark.parametrize("ne,p", [(5, 1), (8, 2), (7, 3)])
def test_stiffness_annihilates_constants(ne, p):
    S = assemble_1d(make_open_knot_vector(ne, p), MatrixKind.STIFFNESS)
    assert np.abs(S.matvec(np.ones(S.n))).max() <= 1e-12


def test_mass_is_spd(rng):
    M = assemble_1d(make_open_knot_vector(9, 3), MatrixKind.MASS).to_dense()
    np.testing.assert_allclose(M, M.T, atol=0)
    for _ in range(100):
        v = rng.standard_normal(M.shape[0])
        assert v @ M @ v > 0
    np.linalg.cholesky(M)


def test_mass_matches_quadrature_oracle():
    kv = make_open_knot_vector(5, 2)
    fine = gauss_rule(8, kv)
    from adimaxwell.splines import collocation_matrix
    x, w = fine.points.ravel(), fine.weights.ravel()
    B = collocation_matrix(kv, x)
    D = collocation_matrix(kv, x, 1)
    np.testing.assert_allclose(assemble_1d(kv, "mass").to_dense(), B.T @ (w[:, None] * B), atol=1e-15)
    np.testing.assert_allclose(assemble_1d(kv, "advection_trial_deriv").to_dense(),
                               B.T @ (w[:, None] * D), atol=1e-14)


def test_combine_examples():
    M = assemble_1d(HATS, "mass")
    S = assemble_1d(HATS, "stiffness")
    assert np.array_equal(combine_mass_plus_scaled_stiffness(M, S, np.zeros(3)).data, M.data)
    np.testing.assert_allclose(combine_mass_plus_scaled_stiffness(M, S, np.full(3, 0.3)).to_dense(),
                               (M + 0.3 * S).to_dense(), atol=0)
    row = combine_mass_plus_scaled_stiffness(M, S, np.array([0.0, 1.0, 0.0])).to_dense()[1]
    np.testing.assert_allclose(row, [1 / 6 - 1, 2 / 3 + 2, 1 / 6 - 1], atol=1e-15)


def test_combine_rejects_bad_input():
    M = assemble_1d(HATS, "mass")
    S = assemble_1d(make_open_knot_vector(3, 1), "stiffness")
    with pytest.raises(ValueError):
        combine_mass_plus_scaled_stiffness(M, S, np.zeros(3))
    S = assemble_1d(HATS, "stiffness")
    with pytest.raises(ValueError):
        combine_mass_plus_scaled_stiffness(M, S, np.array([0.0, -1.0, 0.0]))
    with pytest.raises(ValueError):
        combine_mass_plus_scaled_stiffness(M, S, np.zeros(4))


def test_identity_factorization():
    f = factorize(BandedMatrix.identity(5))
    b = np.arange(5.0)
    np.testing.assert_array_equal(solve_multi_rhs(f, b), b)


def test_mass_row_sums_give_ones():
    M = assemble_1d(HATS, "mass")
    x = solve_multi_rhs(factorize(M), M.to_dense().sum(axis=1))
    np.testing.assert_allclose(x, np.ones(3), rtol=1e-14)


def _random_banded(rng, n, k, dominant=True):
    data = rng.standard_normal((n, 2 * k + 1))
    if dominant:
        data[:, k] = np.abs(data).sum(axis=1) + 1
    A = BandedMatrix(data, k)
    return BandedMatrix.from_dense(A.to_dense(), k)


def test_random_dominant_matches_dense(rng):
    A = _random_banded(rng, 50, 3)
    b = rng.standard_normal((50, 4))
    x = solve_multi_rhs(factorize(A), b)
    ref = np.linalg.solve(A.to_dense(), b)
    assert np.abs(x - ref).max() / np.abs(ref).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), k=st.integers(0, 4), m=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_pivoting_solve_matches_dense(n, k, m, seed):
    rng = np.random.default_rng(seed)
    A = _random_banded(rng, n, k, dominant=False)
    dense = A.to_dense()
    if np.linalg.cond(dense) > 1e8:
        return
    X = rng.standard_normal((n, m))
    x = solve_multi_rhs(factorize(A), dense @ X)
    assert np.abs(x - X).max() <= 1e-8 * max(1.0, np.abs(X).max())


def test_pivoting_needed():
    # zero leading diagonal forces a row interchange
    A = BandedMatrix.from_dense(np.array([[0.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 3.0]]), 1)
    b = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(solve_multi_rhs(factorize(A), b), np.linalg.solve(A.to_dense(), b),
                               rtol=1e-14)


def test_singular_names_row():
    A = BandedMatrix.from_dense(np.diag([1.0, 2.0, 0.0, 4.0]), 1)
    with pytest.raises(SingularMatrixError) as info:
        factorize(A)
    assert info.value.row == 2
    assert "row 2" in str(info.value)


def test_multi_rhs_contract(rng):
    A = _random_banded(rng, 12, 2)
    f = factorize(A)
    assert solve_multi_rhs(f, np.zeros((12, 0))).shape == (12, 0)
    X = rng.standard_normal((12, 7))
    B = A.to_dense() @ X
    full = solve_multi_rhs(f, B)
    np.testing.assert_allclose(full, X, rtol=1e-12, atol=1e-12)
    for j in range(7):
        np.testing.assert_array_equal(solve_multi_rhs(f, B[:, j]), full[:, j])
    with pytest.raises(ValueError):
        solve_multi_rhs(f, np.zeros((11, 2)))


def test_banded_matrix_ops(rng):
    A = _random_banded(rng, 9, 2)
    B = _random_banded(rng, 9, 1)
    np.testing.assert_allclose((A + B).to_dense(), A.to_dense() + B.to_dense())
    np.testing.assert_allclose(A.T.to_dense(), A.to_dense().T)
    np.testing.assert_allclose((2.5 * A).to_dense(), 2.5 * A.to_dense())
    v = rng.standard_normal(9)
    np.testing.assert_allclose(A.matvec(v), A.to_dense() @ v, atol=1e-14)


def test_cost_scaling():
    rng = np.random.default_rng(0)
    times = []
    for n in (4000, 8000, 16000):
        A = _random_banded(rng, n, 2)
        b = rng.standard_normal((n, 50))
        times.append(time_best(lambda: solve_multi_rhs(factorize(A), b), repeats=9, number=3))
    # doubling n doubles the work; quadratic cost would show up as 4x
    for a, b in zip(times, times[1:]):
        assert b / a <= 3.0
