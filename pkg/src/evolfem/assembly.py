"""Mass, stiffness and manufactured right-hand sides on evolving spaces.

Sparse matrices are scipy CSR matrices.  The symbolic pattern of a space is
computed once from its connectivity; every assembly only refills values.
Row index = test function, column index = trial function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import geometry
from .errors import ConstructionError
from .fespace import ElementGeometry, EvolvingSpace, TraceMap, geometry_batch


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of  A grad u . grad phi + u b . grad phi + c u phi.

    ``diffusion(x, t)`` returns (..., 3, 3); ``advection(x, t, nu)`` returns
    (..., 3) and receives the exact unit normal on surfaces (None in the
    bulk); ``reaction(x, t)`` returns (...).
    """
    diffusion: Callable
    advection: Callable
    reaction: Callable
    tangential_advection: bool = False


def identity_coefficients(reaction: float = 0.0) -> CoefficientSet:
    def A(x, t):
        return np.broadcast_to(np.eye(3), np.shape(x)[:-1] + (3, 3))

    def b(x, t, nu=None):
        return np.zeros(np.shape(x))

    def c(x, t):
        return np.full(np.shape(x)[:-1], float(reaction))

    return CoefficientSet(A, b, c)


@dataclass(frozen=True)
class ManufacturedData:
    exact: geometry.AmbientField
    coefficients: CoefficientSet


@dataclass(frozen=True)
class CoupledData:
    bulk: ManufacturedData
    surface: ManufacturedData
    alpha: float = 1.0
    beta: float = 1.0


# ------------------------------------------------------------ sparsity

class SparsityPattern:
    """Fixed CSR pattern of a square operator plus the scatter map for refills."""

    def __init__(self, element_dofs: np.ndarray, size: int):
        ne, n = element_dofs.shape
        rows = np.repeat(element_dofs, n, axis=1).ravel()
        cols = np.tile(element_dofs, (1, n)).ravel()
        code = rows.astype(np.int64) * size + cols
        uniq, slots = np.unique(code, return_inverse=True)
        self.size = size
        self.shape = (size, size)
        self.indices = (uniq % size).astype(np.int32)
        r = uniq // size
        self.indptr = np.searchsorted(r, np.arange(size + 1)).astype(np.int32)
        self.slots = slots.ravel()
        self.nnz = len(uniq)

    def fill(self, local: np.ndarray) -> sp.csr_matrix:
        """Sum element matrices (ne, n, n) into a new CSR matrix."""
        data = np.bincount(self.slots, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


_PATTERNS: dict[int, tuple[EvolvingSpace, SparsityPattern]] = {}


def pattern_for(space: EvolvingSpace) -> SparsityPattern:
    hit = _PATTERNS.get(id(space))
    if hit is None or hit[0] is not space:
        hit = (space, SparsityPattern(space.element_dofs, space.dof_count))
        _PATTERNS[id(space)] = hit
    return hit[1]


def scatter_vector(space: EvolvingSpace, local: np.ndarray) -> np.ndarray:
    return np.bincount(space.element_dofs.ravel(), weights=local.ravel(),
                       minlength=space.dof_count)


# ------------------------------------------------------------ local kernels

def _exact_normal(space, geom, t):
    if space.kind != "surface":
        return None
    return space.evolution.normal(geom.points, t)


def _weighted_gram(left, right, w):
    """sum_q w[e,q] left[e,q,i,:] . right[e,q,j,:]  for arrays (ne, nq, N, c)."""
    ne, nq, n, c = left.shape
    L = np.transpose(left * w[..., None, None], (0, 2, 1, 3)).reshape(ne, n, nq * c)
    R = np.transpose(right, (0, 2, 1, 3)).reshape(ne, n, nq * c)
    return np.matmul(L, np.swapaxes(R, 1, 2))


def local_mass(geom: ElementGeometry, weight=None) -> np.ndarray:
    dx = geom.dx if weight is None else geom.dx * weight
    return np.matmul(dx[:, None, :] * geom.basis.T[None], geom.basis[None])


def local_stiffness(space: EvolvingSpace, geom: ElementGeometry, t: float,
                    coeffs: CoefficientSet) -> np.ndarray:
    x = geom.points
    dx = geom.dx
    grads = geom.gradients
    A = coeffs.diffusion(x, t)
    Agrad = np.matmul(grads, np.swapaxes(A, -1, -2))
    K = _weighted_gram(grads, Agrad, dx)
    nu = _exact_normal(space, geom, t)
    b = coeffs.advection(x, t, nu)
    if np.any(b):
        bgrad = np.matmul(grads, b[..., None])[..., 0]          # (ne, nq, N)
        K += np.matmul(np.swapaxes(bgrad * dx[..., None], 1, 2), geom.basis[None])
    c = coeffs.reaction(x, t)
    if np.any(c):
        K += local_mass(geom, c)
    return K


def local_rhs(space: EvolvingSpace, geom: ElementGeometry, t: float,
              data: ManufacturedData) -> np.ndarray:
    """Weak residual of the exact solution against every local basis function.

    ``(md u + u div w) phi + A grad u . grad phi + u b . grad phi + c u phi``
    with the tangential calculus on surfaces taken w.r.t. the exact normal.
    """
    ev = space.evolution
    x = geom.points
    u = data.exact
    cf = data.coefficients
    val = u.value(x, t)
    md = geometry.material_derivative(u, x, t, ev)
    grad = u.gradient(x, t)
    nu = _exact_normal(space, geom, t)
    if nu is not None:
        div_w = geometry.tangential_divergence_velocity(x, t, ev, normal=nu)
        grad = geometry.project_tangential(grad, nu)
    else:
        div_w = geometry.bulk_divergence_velocity(x, t, ev)
    flux = np.einsum("eqab,eqb->eqa", cf.diffusion(x, t), grad) + val[..., None] * cf.advection(x, t, nu)
    scalar = md + val * div_w + cf.reaction(x, t) * val
    dx = geom.dx
    return ((dx * scalar) @ geom.basis
            + np.einsum("eqia,eqa->ei", geom.gradients, flux * dx[..., None], optimize=True))


# ------------------------------------------------------------ public assembly

def _geom(space, t, rule, geom):
    return geometry_batch(space, t, rule) if geom is None else geom


def assemble_mass(space: EvolvingSpace, t: float, weight: float = 1.0,
                  rule=None, geom=None) -> sp.csr_matrix:
    g = _geom(space, t, rule, geom)
    return pattern_for(space).fill(weight * local_mass(g))


def assemble_stiffness(space: EvolvingSpace, t: float, coeffs: CoefficientSet,
                       weight: float = 1.0, rule=None, geom=None) -> sp.csr_matrix:
    g = _geom(space, t, rule, geom)
    return pattern_for(space).fill(weight * local_stiffness(space, g, t, coeffs))


def assemble_manufactured_rhs(space: EvolvingSpace, t: float, data: ManufacturedData,
                              weight: float = 1.0, rule=None, geom=None) -> np.ndarray:
    g = _geom(space, t, rule, geom)
    return weight * scatter_vector(space, local_rhs(space, g, t, data))


def coupling_operator(trace: TraceMap, n_bulk: int, alpha: float, beta: float) -> sp.csr_matrix:
    """B with (B z)_j = alpha * u(trace node j) - beta * v_j for z = [u | v]."""
    ns = len(trace)
    rows = np.concatenate([np.arange(ns), np.arange(ns)])
    cols = np.concatenate([trace.bulk_dofs, n_bulk + np.arange(ns)])
    vals = np.concatenate([np.full(ns, float(alpha)), np.full(ns, -float(beta))])
    return sp.csr_matrix((vals, (rows, cols)), shape=(ns, n_bulk + ns))


def assemble_coupled(bulk: EvolvingSpace, surf: EvolvingSpace, trace: TraceMap,
                     t: float, data: CoupledData, rule_bulk=None, rule_surf=None):
    """Block system for the product space, bulk dofs first.

    Returns ``(M, S, r)`` with ``M = diag(alpha M_bulk, beta M_surf)`` and
    ``S = diag(alpha S_bulk, beta S_surf) + B^T M_surf B``.
    """
    if len(trace) != surf.dof_count:
        raise ConstructionError("trace map does not cover the surface space")
    a, b = data.alpha, data.beta
    gb = geometry_batch(bulk, t, rule_bulk)
    gs = geometry_batch(surf, t, rule_surf)
    Mb = pattern_for(bulk).fill(local_mass(gb))
    Ms = pattern_for(surf).fill(local_mass(gs))
    Sb = pattern_for(bulk).fill(local_stiffness(bulk, gb, t, data.bulk.coefficients))
    Ss = pattern_for(surf).fill(local_stiffness(surf, gs, t, data.surface.coefficients))
    B = coupling_operator(trace, bulk.dof_count, a, b)
    M = sp.block_diag([a * Mb, b * Ms], format="csr")
    S = (sp.block_diag([a * Sb, b * Ss], format="csr") + B.T @ Ms @ B).tocsr()
    rb = scatter_vector(bulk, local_rhs(bulk, gb, t, data.bulk))
    rs = scatter_vector(surf, local_rhs(surf, gs, t, data.surface))
    # coupling residual: int (alpha u - beta v) (alpha phi - beta rho)
    jump = a * data.bulk.exact.value(gs.points, t) - b * data.surface.exact.value(gs.points, t)
    q = scatter_vector(surf, np.einsum("eq,qi->ei", gs.dx * jump, gs.basis))
    r = np.concatenate([a * rb, b * rs]) + B.T @ q
    M.sort_indices()
    S.sort_indices()
    return M, S, r


# ------------------------------------------------------------ systems

class ScalarSystem:
    """M(t), S(t), r(t) for a single surface or bulk space."""

    def __init__(self, space: EvolvingSpace, data: ManufacturedData, rule=None):
        self.space = space
        self.data = data
        self.rule = space.default_quadrature() if rule is None else rule

    @property
    def size(self) -> int:
        return self.space.dof_count

    def mass(self, t):
        return assemble_mass(self.space, t, rule=self.rule)

    def assemble(self, t, with_rhs: bool = True):
        g = geometry_batch(self.space, t, self.rule)
        pat = pattern_for(self.space)
        M = pat.fill(local_mass(g))
        S = pat.fill(local_stiffness(self.space, g, t, self.data.coefficients))
        r = (scatter_vector(self.space, local_rhs(self.space, g, t, self.data))
             if with_rhs else np.zeros(self.size))
        return M, S, r

    def initial(self, t=0.0):
        return self.data.exact(self._positions(t), t)

    def _positions(self, t):
        return self.space.evolution.flow(self.space.initial_nodes, t)


class CoupledSystem:
    def __init__(self, bulk: EvolvingSpace, surf: EvolvingSpace, trace: TraceMap,
                 data: CoupledData, rule_bulk=None, rule_surf=None):
        self.bulk, self.surf, self.trace, self.data = bulk, surf, trace, data
        self.rule_bulk = bulk.default_quadrature() if rule_bulk is None else rule_bulk
        self.rule_surf = surf.default_quadrature() if rule_surf is None else rule_surf

    @property
    def size(self) -> int:
        return self.bulk.dof_count + self.surf.dof_count

    def mass(self, t):
        a, b = self.data.alpha, self.data.beta
        return sp.block_diag([assemble_mass(self.bulk, t, a, self.rule_bulk),
                              assemble_mass(self.surf, t, b, self.rule_surf)], format="csr")

    def assemble(self, t, with_rhs: bool = True):
        M, S, r = assemble_coupled(self.bulk, self.surf, self.trace, t, self.data,
                                   self.rule_bulk, self.rule_surf)
        return M, S, (r if with_rhs else np.zeros(self.size))

    def initial(self, t=0.0):
        ev = self.bulk.evolution
        u = self.data.bulk.exact(ev.flow(self.bulk.initial_nodes, t), t)
        v = self.data.surface.exact(ev.flow(self.surf.initial_nodes, t), t)
        return np.concatenate([u, v])


def write_matrix_market(path, A: sp.spmatrix, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
