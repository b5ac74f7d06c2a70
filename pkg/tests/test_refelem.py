from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evolfem.errors import ConfigurationError
from evolfem.refelem import (MAX_QUADRATURE_DEGREE, eval_basis, eval_basis_gradients,
                             make_quadrature, make_reference, multi_indices,
                             simplex_monomial_integral)

ELEMENTS = [(d, k) for d in (1, 2, 3) for k in (1, 2, 3)]


def random_bary(rng, n, dim):
    return rng.dirichlet(np.ones(dim + 1), size=n)


@pytest.mark.parametrize("dim,order,count", [(2, 1, 3), (2, 2, 6), (3, 2, 10), (3, 3, 20), (1, 3, 4)])
def test_node_counts(dim, order, count):
    ref = make_reference(dim, order)
    assert ref.basis_count == count == len(ref.nodes)


def test_p1_nodes_are_vertices():
    ref = make_reference(2, 1)
    np.testing.assert_array_equal(ref.nodes, np.eye(3))
    np.testing.assert_array_equal(ref.vertex_nodes, [0, 1, 2])


def test_p2_triangle_order():
    assert multi_indices(2, 2) == [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]


@pytest.mark.parametrize("dim,order", [(0, 1), (4, 1), (2, 0), (2, 4)])
def test_unsupported_reference(dim, order):
    with pytest.raises(ConfigurationError):
        make_reference(dim, order)


@pytest.mark.parametrize("dim,order", ELEMENTS)
def test_reference_invariants(dim, order):
    ref = make_reference(dim, order)
    nodes = ref.nodes
    assert len({tuple(n) for n in nodes}) == len(nodes)
    np.testing.assert_allclose(nodes.sum(axis=1), 1.0, atol=1e-15)
    assert nodes.min() >= 0 and nodes.max() <= 1
    assert ref.basis_count == comb(dim + order, order)
    # Kronecker property
    np.testing.assert_allclose(eval_basis(ref, nodes), np.eye(ref.basis_count), atol=1e-13)


def test_p1_vertex_value():
    np.testing.assert_allclose(eval_basis(make_reference(2, 1), (1, 0, 0)), [1, 0, 0])


def test_p2_edge_midpoint():
    ref = make_reference(2, 2)
    vals = eval_basis(ref, (0.5, 0.5, 0.0))
    expected = np.zeros(6)
    expected[1] = 1.0        # node (1,1,0)
    np.testing.assert_allclose(vals, expected, atol=1e-15)


def test_p1_triangle_gradients(rng):
    ref = make_reference(2, 1)
    for p in random_bary(rng, 5, 2):
        np.testing.assert_allclose(eval_basis_gradients(ref, p), [[-1, -1], [1, 0], [0, 1]], atol=1e-14)


def test_p2_interval_bubble_gradient():
    ref = make_reference(1, 2)
    g = eval_basis_gradients(ref, (0.5, 0.5))
    mid = [i for i, a in enumerate(ref.multi_index) if tuple(a) == (1, 1)][0]
    assert abs(g[mid, 0]) < 1e-15
    # 4x(1-x) at x = 0.5
    assert eval_basis(ref, (0.5, 0.5))[mid] == pytest.approx(1.0)


@pytest.mark.parametrize("dim,order", ELEMENTS)
def test_partition_of_unity(dim, order, rng):
    ref = make_reference(dim, order)
    pts = random_bary(rng, 1000, dim)
    assert np.abs(eval_basis(ref, pts).sum(axis=1) - 1).max() <= 1e-13
    assert np.abs(eval_basis_gradients(ref, pts).sum(axis=1)).max() <= 1e-12


@pytest.mark.parametrize("dim,order", ELEMENTS)
def test_gradients_match_central_differences(dim, order, rng):
    ref = make_reference(dim, order)
    h = 1e-6
    for lam in random_bary(rng, 20, dim):
        x = lam[1:]
        g = eval_basis_gradients(ref, lam)
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            xp, xm = x + e, x - e
            fp = eval_basis(ref, np.r_[1 - xp.sum(), xp])
            fm = eval_basis(ref, np.r_[1 - xm.sum(), xm])
            np.testing.assert_allclose((fp - fm) / (2 * h), g[:, j], atol=1e-6)


def _monomials(dim, degree):
    import itertools
    return [a for a in itertools.product(range(degree + 1), repeat=dim) if sum(a) <= degree]


@pytest.mark.parametrize("dim,degree", [(1, 7), (2, 4), (2, 8), (3, 6), (3, 8), (2, 12)])
def test_quadrature_exactness(dim, degree):
    rule = make_quadrature(dim, degree)
    x = rule.ref_coords
    for a in _monomials(dim, degree):
        approx = (rule.weights * np.prod(x ** np.array(a), axis=1)).sum()
        exact = float(simplex_monomial_integral(a))
        assert abs(approx - exact) <= 1e-13, a


def test_quadrature_examples():
    tri = make_quadrature(2, 4)
    assert tri.weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert (tri.weights * tri.ref_coords[:, 0]).sum() == pytest.approx(1 / 6, abs=1e-15)
    assert make_quadrature(3, 4).weights.sum() == pytest.approx(1 / 6, abs=1e-15)
    assert make_quadrature(1, 3).weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_quadrature_points_inside():
    rule = make_quadrature(3, 10)
    assert rule.points.min() >= 0
    np.testing.assert_allclose(rule.points.sum(axis=1), 1, atol=1e-15)


def test_quadrature_degree_limits():
    with pytest.raises(ConfigurationError):
        make_quadrature(2, MAX_QUADRATURE_DEGREE + 1)
    with pytest.raises(ConfigurationError):
        make_quadrature(4, 2)
    for k in (1, 2, 3):
        make_quadrature(3, 2 * k + 4)


def test_dirichlet_oracle_against_sympy():
    sympy = pytest.importorskip("sympy")
    x, y, z = sympy.symbols("x y z")
    for a in [(0, 0), (1, 0), (2, 3), (4, 1)]:
        val = sympy.integrate(sympy.integrate(x ** a[0] * y ** a[1], (y, 0, 1 - x)), (x, 0, 1))
        assert Fraction(str(val)) == simplex_monomial_integral(a)
    val = sympy.integrate(x * y ** 2 * z, (z, 0, 1 - x - y), (y, 0, 1 - x), (x, 0, 1))
    assert Fraction(str(val)) == simplex_monomial_integral((1, 2, 1))


@settings(max_examples=60, deadline=None)
@given(dim=st.integers(1, 3), order=st.integers(1, 3),
       w=st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))
def test_partition_of_unity_property(dim, order, w):
    lam = np.array(w[:dim + 1])
    lam /= lam.sum()
    ref = make_reference(dim, order)
    assert abs(eval_basis(ref, lam).sum() - 1) <= 1e-13
    assert np.abs(eval_basis_gradients(ref, lam).sum(axis=0)).max() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(dim=st.integers(1, 3), degree=st.integers(0, 10), data=st.data())
def test_quadrature_exactness_property(dim, degree, data):
    a = data.draw(st.lists(st.integers(0, degree), min_size=dim, max_size=dim)
                  .filter(lambda a: sum(a) <= degree))
    rule = make_quadrature(dim, degree)
    approx = (rule.weights * np.prod(rule.ref_coords ** np.array(a), axis=1)).sum()
    assert abs(approx - float(simplex_monomial_integral(a))) <= 1e-13
