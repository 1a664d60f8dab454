import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adimaxwell.splines import (DomainError, KnotVector, basis_funs, collocation_matrix, eval_basis,
                                gauss_rule, greville_points, make_open_knot_vector)


def test_two_linear_elements():
    kv = make_open_knot_vector(2, 1, 0)
    np.testing.assert_allclose(kv.knots, [0, 0, 0.5, 1, 1])
    assert kv.n_basis == 3


def test_single_element():
    kv = make_open_knot_vector(1, 1, 0)
    np.testing.assert_allclose(kv.knots, [0, 0, 1, 1])
    assert kv.n_basis == 2


def test_sixteen_quadratic_c1():
    kv = make_open_knot_vector(16, 2, 1)
    assert kv.n_basis == 18
    assert len(np.unique(kv.knots)) == 17


@pytest.mark.parametrize("ne,p,c", [(3, 2, 0), (4, 3, 1), (5, 3, 2), (2, 4, 0)])
def test_basis_count_formula(ne, p, c):
    assert make_open_knot_vector(ne, p, c).n_basis == ne * (p - c) + c + 1


@pytest.mark.parametrize("c", [-1, 2, 5])
def test_bad_continuity(c):
    with pytest.raises(ValueError):
        make_open_knot_vector(4, 2, c)


def test_invalid_knots():
    with pytest.raises(ValueError):
        KnotVector(1, np.array([0, 0.5, 1, 1]))
    with pytest.raises(ValueError):
        KnotVector(1, np.array([0, 0, 1, 0.5, 1, 1]))


def test_hat_values():
    kv = KnotVector(1, np.array([0, 0, 0.5, 1, 1]))
    be = eval_basis(kv, 0.25)
    np.testing.assert_allclose(be.values, [0.5, 0.5])
    assert be.first_index == 0


def test_left_endpoint_interpolates():
    kv = make_open_knot_vector(5, 3)
    be = eval_basis(kv, 0.0)
    assert be.first_index == 0
    np.testing.assert_allclose(be.values, [1, 0, 0, 0], atol=0)


def test_right_endpoint_interpolates():
    kv = make_open_knot_vector(5, 2)
    row = collocation_matrix(kv, np.array([1.0]))[0]
    np.testing.assert_allclose(row, np.eye(kv.n_basis)[-1], atol=1e-15)


def test_domain_error():
    kv = make_open_knot_vector(3, 2)
    with pytest.raises(DomainError):
        eval_basis(kv, 1.0 + 1e-9)
    with pytest.raises(DomainError):
        basis_funs(kv, np.array([-0.1, 0.5]))


@settings(max_examples=30, deadline=None)
@given(ne=st.integers(1, 12), p=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_partition_of_unity(ne, p, seed):
    kv = make_open_knot_vector(ne, p)
    x = np.random.default_rng(seed).uniform(0, 1, 1000)
    _, vals, ders = basis_funs(kv, x)
    assert np.abs(vals.sum(axis=1) - 1).max() <= 1e-13
    assert np.abs(ders.sum(axis=1)).max() <= 1e-10
    assert vals.min() >= -1e-15


@settings(max_examples=20, deadline=None)
@given(ne=st.integers(1, 8), p=st.integers(1, 4), c=st.integers(0, 3))
def test_support(ne, p, c):
    c = min(c, p - 1)
    kv = make_open_knot_vector(ne, p, c)
    x = np.linspace(0, 1, 301)
    B = collocation_matrix(kv, x)
    t = kv.knots
    for i in range(kv.n_basis):
        outside = (x < t[i]) | (x > t[i + p + 1])
        assert np.all(B[outside, i] == 0)


def test_greville_examples():
    np.testing.assert_allclose(greville_points(KnotVector(1, np.array([0., 0, 1, 1]))), [0, 1])
    np.testing.assert_allclose(greville_points(KnotVector(1, np.array([0, 0, .5, 1, 1]))), [0, .5, 1])
    np.testing.assert_allclose(greville_points(KnotVector(2, np.array([0, 0, 0, .5, 1, 1, 1]))),
                               [0, .25, .75, 1])


@pytest.mark.parametrize("ne,p", [(1, 1), (4, 2), (7, 3), (5, 4)])
def test_greville_reproduces_linears(ne, p):
    kv = make_open_knot_vector(ne, p)
    x = np.linspace(0, 1, 517)
    g = greville_points(kv)
    assert np.all(np.diff(g) >= 0)
    np.testing.assert_allclose(collocation_matrix(kv, x) @ g, x, atol=1e-13)


def test_gauss_midpoint():
    r = gauss_rule(1, make_open_knot_vector(1, 1))
    np.testing.assert_allclose(r.points, [[0.5]])
    np.testing.assert_allclose(r.weights, [[1.0]])


def test_gauss_cubic_exact():
    r = gauss_rule(2, make_open_knot_vector(1, 1))
    assert abs(np.sum(r.weights * r.points ** 2) - 1 / 3) < 1e-15
    assert abs(np.sum(r.weights * r.points ** 3) - 1 / 4) < 1e-15


def test_gauss_exactness_degree():
    kv = make_open_knot_vector(3, 2)
    for q in range(1, 6):
        r = gauss_rule(q, kv)
        for d in range(2 * q):
            assert abs(np.sum(r.weights * r.points ** d) - 1 / (d + 1)) < 1e-14


def test_derivatives_match_finite_differences():
    kv = make_open_knot_vector(6, 3, 1)
    x = np.linspace(0.013, 0.987, 40)
    h = 1e-6
    fd = (collocation_matrix(kv, x + h) - collocation_matrix(kv, x - h)) / (2 * h)
    np.testing.assert_allclose(collocation_matrix(kv, x, 1), fd, atol=1e-6)
