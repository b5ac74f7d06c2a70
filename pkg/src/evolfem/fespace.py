"""Evolving isoparametric Lagrange spaces on surfaces and bulk domains.

Connectivity is fixed for all time; only node positions move, each node
following the exact flow of the domain.  A global node is identified by the
sorted multiset of the ``k`` mesh vertices whose mean is its affine
position, e.g. the P2 node on edge (a, b) has key (a, b) and the vertex node
at a has key (a, a).  Vertex nodes are numbered first, with their mesh
vertex index, followed by the remaining nodes in sorted-key order.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import geometry
from .errors import ConstructionError, DegenerateElementError, InvalidMeshError
from .mesh import (BoundarySurface, SimplicialMesh, _boundary_face_edges,
                   _boundary_faces, mesh_size)
from .refelem import (QuadratureRule, ReferenceElement, eval_basis, eval_basis_gradients,
                      make_quadrature, make_reference)

SPHERE_TOL = 1e-10
DEGENERATE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class EvolvingSpace:
    kind: str                      # "surface" or "bulk"
    reference: ReferenceElement
    mesh: SimplicialMesh
    element_dofs: np.ndarray       # (n_elements, N)
    node_keys: np.ndarray          # (dof_count, k) sorted vertex multisets
    initial_nodes: np.ndarray      # (dof_count, 3)
    evolution: geometry.EllipsoidEvolution

    @property
    def order(self) -> int:
        return self.reference.order

    @property
    def dof_count(self) -> int:
        return len(self.initial_nodes)

    @property
    def n_elements(self) -> int:
        return len(self.element_dofs)

    def default_quadrature(self) -> QuadratureRule:
        return make_quadrature(self.reference.dim, 2 * self.order + 2)

    def mesh_size(self):
        return mesh_size(self.mesh, self.initial_nodes, self.element_dofs)


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Geometric quantities at quadrature points, with a leading element axis.

    ``jacobian`` is (ne, nq, 3, dim); ``measure`` is sqrt(det G) for surfaces
    and |det J| for the bulk; ``gradients`` is (ne, nq, N, 3).
    """
    node_positions: np.ndarray
    points: np.ndarray
    basis: np.ndarray
    jacobian: np.ndarray
    gram: np.ndarray
    measure: np.ndarray
    gradients: np.ndarray
    unit_normal: np.ndarray | None
    weights: np.ndarray

    @property
    def sqrt_g(self):
        return self.measure

    @property
    def physical_basis_gradients(self):
        return self.gradients

    @property
    def dx(self):
        """Quadrature weight times measure factor, (ne, nq)."""
        return self.weights[None, :] * self.measure


# ---------------------------------------------------------------- numbering

def _local_multisets(ref: ReferenceElement) -> np.ndarray:
    """For each local node, its multiset of local vertex indices (N, k)."""
    return np.array([np.repeat(np.arange(ref.dim + 1), a) for a in ref.multi_index])


def _number_nodes(mesh: SimplicialMesh, ref: ReferenceElement):
    local = _local_multisets(ref)
    keys = np.sort(mesh.simplices[:, local], axis=-1)  # (ne, N, k)
    flat = keys.reshape(-1, ref.order)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    inv = inv.ravel()
    is_vertex = (uniq == uniq[:, :1]).all(axis=1)
    nv = mesh.n_vertices
    if is_vertex.sum() != nv:
        raise InvalidMeshError("mesh has unused vertices")
    number = np.empty(len(uniq), dtype=np.int64)
    number[is_vertex] = uniq[is_vertex, 0]
    number[~is_vertex] = nv + np.arange((~is_vertex).sum())
    node_keys = np.empty_like(uniq)
    node_keys[number] = uniq
    element_dofs = number[inv].reshape(mesh.n_simplices, ref.basis_count)
    return element_dofs, node_keys


def _affine_nodes(mesh, node_keys):
    return mesh.vertices[node_keys].mean(axis=1)


# ---------------------------------------------------------------- builders

def build_surface_space(mesh: SimplicialMesh, order: int,
                        evolution=geometry.DEFAULT_EVOLUTION) -> EvolvingSpace:
    """Lagrange nodes of each flat triangle, radially projected to the unit sphere."""
    if mesh.simplex_dim != 2:
        raise InvalidMeshError("surface space needs a triangle mesh")
    r = np.linalg.norm(mesh.vertices, axis=1)
    if np.abs(r - 1).max() > SPHERE_TOL:
        raise InvalidMeshError("surface mesh vertex off the unit sphere")
    ref = make_reference(2, order)
    element_dofs, node_keys = _number_nodes(mesh, ref)
    nodes = geometry.initial_surface_projection(_affine_nodes(mesh, node_keys))
    return EvolvingSpace("surface", ref, mesh, element_dofs, node_keys, nodes, evolution)


def _boundary_vertex_sets(mesh: SimplicialMesh):
    """Flagged vertices of every tet, checked to span a boundary edge or face."""
    flags = mesh.boundary[mesh.simplices]  # (ne, 4)
    counts = flags.sum(axis=1)
    if np.any(counts == 4):
        raise ConstructionError("tetrahedron with all four vertices on the boundary")
    faces, _, _ = _boundary_faces(mesh)
    face_set = {tuple(f) for f in np.sort(faces, axis=1)}
    edge_set = {tuple(e) for e in _boundary_face_edges(mesh)}
    for e in np.flatnonzero(counts >= 2):
        sub = tuple(sorted(mesh.simplices[e][flags[e]]))
        if sub not in (face_set if len(sub) == 3 else edge_set):
            raise ConstructionError(
                f"boundary vertices of element {e} do not span a boundary sub-simplex")
    return flags


def build_bulk_space(mesh: SimplicialMesh, order: int,
                     evolution=geometry.DEFAULT_EVOLUTION) -> EvolvingSpace:
    """Isoparametric nodes from the boundary blending map.

    For a boundary element with flagged vertex set L, a lattice point x with
    barycentric coordinates l is moved to
    ``x + (l*)^(k+2) (p(y) - y)``, ``l* = sum_{j in L} l_j``,
    ``y = sum_{j in L} l_j a_j / l*``, p the radial projection.
    Elements with fewer than two flagged vertices are left affine.
    """
    if mesh.simplex_dim != 3 or mesh.boundary is None:
        raise InvalidMeshError("bulk space needs a tetrahedral mesh with boundary flags")
    bv = mesh.vertices[mesh.boundary]
    if np.abs(np.linalg.norm(bv, axis=1) - 1).max() > SPHERE_TOL:
        raise InvalidMeshError("boundary vertex off the unit sphere")
    ref = make_reference(3, order)
    k = order
    element_dofs, node_keys = _number_nodes(mesh, ref)
    nodes = _affine_nodes(mesh, node_keys)

    flags = _boundary_vertex_sets(mesh)
    blended = np.flatnonzero(flags.sum(axis=1) >= 2)
    lam = ref.multi_index / k                                  # (N, 4)
    lam_star = lam[None] @ flags[blended, :, None].astype(float)  # (nb, N, 1)
    lam_star = lam_star[..., 0]
    verts = mesh.vertices[mesh.simplices[blended]]            # (nb, 4, 3)
    x = np.einsum("nj,bjc->bnc", lam, verts)
    lam_L = lam[None] * flags[blended, None, :]               # (nb, N, 4)
    safe = np.where(lam_star > 0, lam_star, 1.0)
    y = np.einsum("bnj,bjc->bnc", lam_L, verts) / safe[..., None]
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    shift = np.where(lam_star[..., None] > 0,
                     lam_star[..., None] ** (k + 2) * (y / np.where(ny > 0, ny, 1.0) - y), 0.0)
    moved = x + shift

    dofs = element_dofs[blended]
    new = nodes.copy()
    new[dofs.ravel()] = moved.reshape(-1, 3)
    # every copy of a shared node must agree
    mismatch = np.abs(new[dofs] - moved).max(initial=0.0)
    if mismatch > 1e-12:
        raise ConstructionError(f"blended node positions disagree by {mismatch:.3e}")
    # lattice nodes on a boundary face (l* = 1) get the same value as the
    # surface construction: projection of the affine point
    on_face = np.isclose(lam_star, 1.0)
    face_nodes = np.unique(dofs[on_face])
    new[face_nodes] = geometry.initial_surface_projection(nodes[face_nodes])
    return EvolvingSpace("bulk", ref, mesh, element_dofs, node_keys, new, evolution)


# ---------------------------------------------------------------- geometry

def node_positions_at(space: EvolvingSpace, t: float) -> np.ndarray:
    return space.evolution.flow(space.initial_nodes, t)


def geometry_batch(space: EvolvingSpace, t: float, rule: QuadratureRule | None = None,
                   elements=None) -> ElementGeometry:
    """Vectorised isoparametric geometry for all (or selected) elements."""
    rule = space.default_quadrature() if rule is None else rule
    if rule.dim != space.reference.dim:
        raise ValueError("quadrature dimension does not match the element")
    ref = space.reference
    dofs = space.element_dofs if elements is None else space.element_dofs[elements]
    X = node_positions_at(space, t)[dofs]                  # (ne, N, 3)
    phi = eval_basis(ref, rule.points)                      # (nq, N)
    dphi = eval_basis_gradients(ref, rule.points)           # (nq, N, d)
    pts = np.einsum("qn,enc->eqc", phi, X, optimize=True)
    J = np.einsum("qnd,enc->eqcd", dphi, X, optimize=True)  # (ne, nq, 3, d)
    G = np.matmul(np.swapaxes(J, -1, -2), J)
    normal = None
    if space.kind == "surface":
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
        meas = np.sqrt(np.maximum(det, 0.0))
        if meas.min() < DEGENERATE_TOL:
            raise DegenerateElementError("surface element with vanishing sqrt(g)")
        Ginv = np.empty_like(G)
        Ginv[..., 0, 0] = G[..., 1, 1] / det
        Ginv[..., 1, 1] = G[..., 0, 0] / det
        Ginv[..., 0, 1] = -G[..., 0, 1] / det
        Ginv[..., 1, 0] = -G[..., 1, 0] / det
        JG = np.matmul(J, Ginv)                              # (ne, nq, 3, 2)
        grads = np.matmul(dphi[None], np.swapaxes(JG, -1, -2))
        n = np.cross(J[..., 0], J[..., 1])
        normal = n / np.linalg.norm(n, axis=-1, keepdims=True)
    else:
        # cofactor inverse: rows of J^{-1} are cross products of columns of J
        c0, c1, c2 = J[..., 0], J[..., 1], J[..., 2]
        r0, r1, r2 = np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)
        detJ = np.sum(c0 * r0, axis=-1)
        meas = np.abs(detJ)
        if meas.min() < DEGENERATE_TOL:
            raise DegenerateElementError("tetrahedron with vanishing Jacobian")
        Jinv = np.stack([r0, r1, r2], axis=-2) / detJ[..., None, None]   # (ne, nq, d, 3)
        grads = np.matmul(dphi[None], Jinv)
    return ElementGeometry(X, pts, phi, J, G, meas, grads, normal, rule.weights)


def element_geometry(space: EvolvingSpace, element: int, t: float,
                     rule: QuadratureRule | None = None) -> ElementGeometry:
    """Geometry of a single element (leading axis of length one dropped)."""
    g = geometry_batch(space, t, rule, elements=[element])
    return ElementGeometry(
        g.node_positions[0], g.points[0], g.basis, g.jacobian[0], g.gram[0],
        g.measure[0], g.gradients[0],
        None if g.unit_normal is None else g.unit_normal[0], g.weights)


def discrete_measure(space: EvolvingSpace, t: float, rule=None) -> float:
    """Area (surface) or volume (bulk) of the discrete domain at time t."""
    return float(geometry_batch(space, t, rule).dx.sum())


def interpolate(space: EvolvingSpace, field, t: float) -> np.ndarray:
    """Nodal interpolation of an ambient field at the nodes' time-t positions."""
    return field(node_positions_at(space, t), t)


# ---------------------------------------------------------------- trace map

@dataclass(frozen=True, eq=False)
class TraceMap:
    bulk_dofs: np.ndarray     # surface dof i  <->  bulk dof bulk_dofs[i]
    face_tet: np.ndarray
    face_local: np.ndarray

    def __len__(self):
        return len(self.bulk_dofs)


def build_trace_map(bulk: EvolvingSpace, surface: EvolvingSpace,
                    boundary: BoundarySurface) -> TraceMap:
    """Match every surface dof with the bulk dof at the same Lagrange node."""
    if bulk.order != surface.order:
        raise ConstructionError("bulk and surface spaces have different orders")
    skeys = np.sort(boundary.vertex_map[surface.node_keys], axis=1)
    bkeys = bulk.node_keys
    k = bulk.order
    nv = bulk.mesh.n_vertices
    base = nv ** np.arange(k - 1, -1, -1, dtype=np.int64)
    bcode = bkeys @ base
    scode = skeys @ base
    order = np.argsort(bcode)
    pos = np.searchsorted(bcode[order], scode)
    pos = np.minimum(pos, len(order) - 1)
    match = order[pos]
    if not np.array_equal(bcode[match], scode):
        raise ConstructionError("surface dof without matching bulk dof")
    gap = np.abs(bulk.initial_nodes[match] - surface.initial_nodes).max(initial=0.0)
    if gap > 1e-12:
        raise ConstructionError(f"matched nodes differ by {gap:.3e}")
    return TraceMap(match, boundary.face_tet, boundary.face_local)


# ------------------------------------------------------------- display

def lattice_subsimplices(dim: int, order: int) -> np.ndarray:
    """Split of the order-k lattice into flat sub-simplices (local node indices)."""
    ref = make_reference(dim, order)
    index = {tuple(a): i for i, a in enumerate(ref.multi_index)}
    if dim == 2:
        cells = []
        for i in range(order):
            for j in range(order - i):
                # lattice point with x1 = i, x2 = j
                def node(a, b):
                    return index[(order - a - b, a, b)]
                cells.append([node(i, j), node(i + 1, j), node(i, j + 1)])
                if i + j <= order - 2:
                    cells.append([node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)])
        return np.array(cells)
    if order == 1:
        return np.array([[0, 1, 2, 3]])
    if order == 2:
        v = [index[(2, 0, 0, 0)], index[(0, 2, 0, 0)], index[(0, 0, 2, 0)], index[(0, 0, 0, 2)]]
        m = {(a, b): index[tuple(int(c) for c in (np.eye(4, dtype=int)[a] + np.eye(4, dtype=int)[b]))]
             for a, b in combinations(range(4), 2)}
        x0, x1, x2, x3 = v
        return np.array([
            [x0, m[0, 1], m[0, 2], m[0, 3]], [m[0, 1], x1, m[1, 2], m[1, 3]],
            [m[0, 2], m[1, 2], x2, m[2, 3]], [m[0, 3], m[1, 3], m[2, 3], x3],
            [m[0, 1], m[0, 2], m[0, 3], m[1, 3]], [m[0, 1], m[0, 2], m[1, 2], m[1, 3]],
            [m[0, 2], m[0, 3], m[1, 3], m[2, 3]], [m[0, 2], m[1, 2], m[1, 3], m[2, 3]],
        ])
    raise ValueError(f"no display split for dim={dim}, order={order}")
