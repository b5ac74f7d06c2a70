"""Reference simplices, Lagrange shape functions and quadrature rules.

Points on a reference simplex are passed around as barycentric tuples
``(l0, l1, ..., ld)``.  The reference coordinates are ``(l1, ..., ld)``,
so vertex 0 sits at the origin and vertex ``i`` at the ``i``-th unit vector.

Lagrange nodes are ordered lexicographically *descending* over their
barycentric multi-indices; for order 1 this puts node ``i`` at vertex ``i``,
for the P2 triangle the order is ``(2,0,0), (1,1,0), (1,0,1), (0,2,0),
(0,1,1), (0,0,2)``.  Every other module relies on this ordering.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from math import comb, factorial

import numpy as np
from scipy.special import roots_jacobi

from .errors import ConfigurationError

SUPPORTED_ORDERS = {1: (1, 2, 3), 2: (1, 2, 3), 3: (1, 2, 3)}
MAX_QUADRATURE_DEGREE = 30


def multi_indices(dim: int, order: int) -> list[tuple[int, ...]]:
    """All barycentric multi-indices of ``order`` with ``dim + 1`` entries,
    lexicographically descending."""
    idx = [a for a in itertools.product(range(order, -1, -1), repeat=dim + 1)
           if sum(a) == order]
    return idx


@dataclass(frozen=True)
class ReferenceElement:
    dim: int
    order: int
    multi_index: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        """Barycentric coordinates of the Lagrange lattice, shape (N, dim+1)."""
        return self.multi_index / self.order

    @property
    def basis_count(self) -> int:
        return comb(self.dim + self.order, self.order)

    @property
    def vertex_nodes(self) -> np.ndarray:
        """Local indices of the nodes sitting on the simplex vertices."""
        return np.flatnonzero(self.multi_index.max(axis=1) == self.order)


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    degree: int
    points: np.ndarray   # barycentric, shape (nq, dim+1)
    weights: np.ndarray  # shape (nq,)

    @property
    def ref_coords(self) -> np.ndarray:
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def make_reference(dim: int, order: int) -> ReferenceElement:
    if dim not in SUPPORTED_ORDERS or order not in SUPPORTED_ORDERS[dim]:
        raise ConfigurationError(
            f"unsupported reference element dim={dim}, order={order}")
    mi = np.array(multi_indices(dim, order), dtype=np.int64)
    mi.setflags(write=False)
    return ReferenceElement(dim, order, mi)


def _as_bary(elem: ReferenceElement, point) -> np.ndarray:
    lam = np.asarray(point, dtype=float)
    if lam.shape[-1] != elem.dim + 1:
        raise ValueError(f"expected barycentric tuples of length {elem.dim + 1}")
    return lam


def _factor_table(elem: ReferenceElement, lam: np.ndarray):
    """Per-coordinate 1D factors and their derivatives.

    Returns ``f, df`` of shape (..., dim+1, order+1) where ``f[..., j, a]`` is
    prod_{m<a} (k*l_j - m)/(m+1) and ``df`` is its derivative in ``l_j``.
    """
    k = elem.order
    shape = lam.shape + (k + 1,)
    f = np.ones(shape)
    df = np.zeros(shape)
    for a in range(1, k + 1):
        m = a - 1
        g = (k * lam - m) / (m + 1)
        f[..., a] = f[..., a - 1] * g
        df[..., a] = df[..., a - 1] * g + f[..., a - 1] * (k / (m + 1))
    return f, df


def eval_basis(elem: ReferenceElement, point) -> np.ndarray:
    """Values of all basis functions; ``point`` may be a batch of shape (..., dim+1)."""
    lam = _as_bary(elem, point)
    f, _ = _factor_table(elem, lam)
    cols = np.arange(elem.dim + 1)
    # f[..., j, alpha_j] for every node alpha
    picked = f[..., cols, elem.multi_index]  # (..., N, dim+1)
    return picked.prod(axis=-1)


def eval_basis_gradients(elem: ReferenceElement, point) -> np.ndarray:
    """Gradients w.r.t. the ``dim`` reference coordinates, shape (..., N, dim)."""
    lam = _as_bary(elem, point)
    f, df = _factor_table(elem, lam)
    cols = np.arange(elem.dim + 1)
    fv = f[..., cols, elem.multi_index]   # (..., N, d+1)
    dv = df[..., cols, elem.multi_index]
    d1 = elem.dim + 1
    # derivative of the product with respect to each barycentric coordinate
    dlam = np.empty(fv.shape)
    for j in range(d1):
        others = np.delete(fv, j, axis=-1).prod(axis=-1)
        dlam[..., j] = dv[..., j] * others
    # l0 = 1 - sum(x), l_i = x_i
    return dlam[..., 1:] - dlam[..., :1]


def _gauss_jacobi(n: int, alpha: float):
    """Gauss-Jacobi rule on [0, 1] for weight (1-x)^alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1) / 2, w / 2 ** (alpha + 1)


@lru_cache(maxsize=None)
def make_quadrature(dim: int, degree: int) -> QuadratureRule:
    """Collapsed (conical product) Gauss-Jacobi rule exact to ``degree``.

    Weights sum to the reference simplex volume ``1/dim!``.
    """
    if dim not in (1, 2, 3):
        raise ConfigurationError(f"unsupported quadrature dim={dim}")
    if degree < 0 or degree > MAX_QUADRATURE_DEGREE:
        raise ConfigurationError(
            f"quadrature degree {degree} outside 0..{MAX_QUADRATURE_DEGREE}")
    n = degree // 2 + 1
    rules = [_gauss_jacobi(n, float(dim - 1 - i)) for i in range(dim)]
    # Duffy map: x1 = s1, x2 = (1-s1) s2, x3 = (1-s1)(1-s2) s3
    pts, wts = [], []
    for combo in itertools.product(*(range(n) for _ in range(dim))):
        s = [rules[i][0][c] for i, c in enumerate(combo)]
        w = np.prod([rules[i][1][c] for i, c in enumerate(combo)])
        x, scale = [], 1.0
        for si in s:
            x.append(scale * si)
            scale *= 1 - si
        pts.append([1.0 - sum(x)] + x)
        wts.append(w)
    points = np.array(pts)
    weights = np.array(wts)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(dim, degree, points, weights)


def simplex_monomial_integral(exponents) -> Fraction:
    """Exact integral of x^a over the unit reference simplex (Dirichlet formula)."""
    num = 1
    for a in exponents:
        num *= factorial(a)
    return Fraction(num, factorial(sum(exponents) + len(exponents)))
