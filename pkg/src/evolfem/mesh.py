"""Simplicial meshes: macro generators, red refinement, boundary extraction.

Two kinds of mesh are used: closed triangle surfaces in R^3 and
tetrahedral meshes of a ball.  Meshes are immutable; refinement and
projection return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidMeshError

# Face opposite local vertex i of a positively oriented tet, ordered so the
# face normal points out of the tet.
TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
TRI_EDGES = np.array([[0, 1], [1, 2], [2, 0]])
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    vertices: np.ndarray
    simplices: np.ndarray
    boundary: np.ndarray | None = None  # per-vertex flags, bulk meshes only

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        s = np.ascontiguousarray(self.simplices, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidMeshError("vertices must have shape (n, 3)")
        if s.ndim != 2 or s.shape[1] not in (3, 4):
            raise InvalidMeshError("simplices must be triangles or tetrahedra")
        if s.size and (s.min() < 0 or s.max() >= len(v)):
            raise InvalidMeshError("simplex refers to a missing vertex")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "simplices", s)
        if self.boundary is not None:
            b = np.asarray(self.boundary, dtype=bool)
            object.__setattr__(self, "boundary", b)
        for arr in (self.vertices, self.simplices, self.boundary):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def simplex_dim(self) -> int:
        return self.simplices.shape[1] - 1

    @property
    def ambient_dim(self) -> int:
        return 3

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        local = TRI_EDGES if self.simplex_dim == 2 else TET_EDGES
        e = np.sort(self.simplices[:, local].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self) -> int:
        if self.simplex_dim != 2:
            raise InvalidMeshError("Euler characteristic computed for surfaces only")
        return self.n_vertices - len(self.edges()) + self.n_simplices


@dataclass(frozen=True)
class MeshSize:
    h_max: float
    h_min: float
    rho_min: float

    @property
    def quasi_uniformity(self) -> float:
        return self.h_max / self.rho_min


@dataclass(frozen=True, eq=False)
class BoundarySurface:
    """Boundary triangles of a tet mesh and their relation to the parent mesh."""
    mesh: SimplicialMesh
    vertex_map: np.ndarray  # surface vertex -> bulk vertex
    face_tet: np.ndarray    # boundary triangle -> parent tet
    face_local: np.ndarray  # boundary triangle -> local face index (opposite vertex)


# --------------------------------------------------------------- generators

def macro_sphere_surface() -> SimplicialMesh:
    """Regular icosahedron with circumradius 1, outward oriented."""
    phi = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return SimplicialMesh(v, _orient_outward(v, f))


def macro_ball_bulk() -> SimplicialMesh:
    """Octahedron fan: six unit boundary vertices around a central vertex."""
    v = np.array([
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
        [0, 0, 0],
    ], dtype=float)
    tets = []
    for i in (0, 1):
        for j in (2, 3):
            for k in (4, 5):
                tets.append([6, i, j, k])
    tets = _orient_positive(v, np.array(tets))
    boundary = np.ones(7, dtype=bool)
    boundary[6] = False
    return SimplicialMesh(v, tets, boundary)


def _orient_outward(v, tris):
    tris = tris.copy()
    a, b, c = (v[tris[:, i]] for i in range(3))
    n = np.cross(b - a, c - a)
    flip = np.einsum("ij,ij->i", n, a + b + c) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def signed_volumes(v, tets):
    a = v[tets[:, 0]]
    return np.einsum("ij,ij->i", np.cross(v[tets[:, 1]] - a, v[tets[:, 2]] - a),
                     v[tets[:, 3]] - a) / 6.0


def _orient_positive(v, tets):
    tets = tets.copy()
    neg = signed_volumes(v, tets) < 0
    tets[neg] = tets[neg][:, [0, 1, 3, 2]]
    return tets


# --------------------------------------------------------------- refinement

def refine_uniform(mesh: SimplicialMesh) -> SimplicialMesh:
    """Red refinement: 4 children per triangle, 8 per tetrahedron.

    Midpoints are welded through sorted vertex-index edge keys.  Tets are
    split with Bey's rule (interior diagonal between the midpoints of local
    edges 02 and 13).  Bey's vertex order is kept as is, since reordering
    would break the bounded number of shape classes; child tets may
    therefore have negative signed volume, and every orientation-dependent
    routine works with the per-tet sign.
    """
    d = mesh.simplex_dim
    s = mesh.simplices
    edges = mesh.edges()
    nv = mesh.n_vertices
    # edge key -> midpoint index
    key = edges[:, 0] * nv + edges[:, 1]
    order = np.argsort(key)
    key_sorted = key[order]

    def mid(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        pos = np.searchsorted(key_sorted, lo * nv + hi)
        return nv + order[pos]

    new_v = np.vstack([mesh.vertices,
                       0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])

    if d == 2:
        a, b, c = s.T
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        children = np.stack([
            np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
        ], axis=1).reshape(-1, 3)
        return SimplicialMesh(new_v, children)

    x0, x1, x2, x3 = s.T
    m01, m02, m03 = mid(x0, x1), mid(x0, x2), mid(x0, x3)
    m12, m13, m23 = mid(x1, x2), mid(x1, x3), mid(x2, x3)
    children = np.stack([
        np.stack([x0, m01, m02, m03], 1),
        np.stack([m01, x1, m12, m13], 1),
        np.stack([m02, m12, x2, m23], 1),
        np.stack([m03, m13, m23, x3], 1),
        np.stack([m01, m02, m03, m13], 1),
        np.stack([m01, m02, m12, m13], 1),
        np.stack([m02, m03, m13, m23], 1),
        np.stack([m02, m12, m13, m23], 1),
    ], axis=1).reshape(-1, 4)

    boundary = None
    if mesh.boundary is not None:
        bedges = _boundary_face_edges(mesh)
        on_bdry = np.zeros(len(edges), dtype=bool)
        if len(bedges):
            bkey = bedges[:, 0] * nv + bedges[:, 1]
            on_bdry = np.isin(key, bkey)
        boundary = np.concatenate([mesh.boundary, on_bdry])
    return SimplicialMesh(new_v, children, boundary)


def _boundary_faces(mesh: SimplicialMesh):
    """Faces (outward oriented), parent tet and local index of all boundary faces."""
    s = mesh.simplices
    faces = s[:, TET_FACES]  # (nt, 4, 3)
    vol_sign = signed_volumes(mesh.vertices, s) < 0
    faces[vol_sign] = faces[vol_sign][:, :, [0, 2, 1]]
    flat = faces.reshape(-1, 3)
    keys = np.sort(flat, axis=1)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if counts.max(initial=0) > 2:
        raise InvalidMeshError("a face is shared by more than two tetrahedra")
    once = counts[inv] == 1
    idx = np.flatnonzero(once)
    return flat[idx], idx // 4, idx % 4


def _boundary_face_edges(mesh):
    faces, _, _ = _boundary_faces(mesh)
    if not len(faces):
        return np.zeros((0, 2), dtype=np.int64)
    e = np.sort(faces[:, TRI_EDGES].reshape(-1, 2), axis=1)
    return np.unique(e, axis=0)


def boundary_surface(mesh: SimplicialMesh) -> BoundarySurface:
    """Closed outward-oriented boundary triangulation of a tet mesh."""
    if mesh.simplex_dim != 3:
        raise InvalidMeshError("boundary_surface needs a tetrahedral mesh")
    faces, tet, local = _boundary_faces(mesh)
    vmap, tris = np.unique(faces, return_inverse=True)
    tris = tris.reshape(-1, 3)
    surf = SimplicialMesh(mesh.vertices[vmap], tris)
    try:
        check_closed_surface(surf)
    except InvalidMeshError as exc:
        raise InvalidMeshError(f"non-manifold boundary: {exc}") from None
    return BoundarySurface(surf, vmap, tet, local)


# ----------------------------------------------------------- sphere / ball

def project_to_sphere(mesh: SimplicialMesh) -> SimplicialMesh:
    """Radially project surface vertices (or flagged bulk boundary vertices)."""
    v = mesh.vertices.copy()
    sel = slice(None) if mesh.boundary is None else mesh.boundary
    v[sel] /= np.linalg.norm(v[sel], axis=1, keepdims=True)
    return SimplicialMesh(v, mesh.simplices, mesh.boundary)


def sphere_mesh(level: int) -> SimplicialMesh:
    """Icosahedron refined ``level`` times, projecting new vertices each time."""
    mesh = macro_sphere_surface()
    for _ in range(level):
        mesh = project_to_sphere(refine_uniform(mesh))
    return mesh


def ball_mesh(level: int) -> SimplicialMesh:
    """Octahedron fan refined ``level`` times, projecting new boundary
    vertices onto the unit sphere after each refinement."""
    mesh = macro_ball_bulk()
    for _ in range(level):
        mesh = project_to_sphere(refine_uniform(mesh))
    return mesh


# -------------------------------------------------------------- measurement

def simplex_measures(mesh: SimplicialMesh) -> np.ndarray:
    v, s = mesh.vertices, mesh.simplices
    if mesh.simplex_dim == 2:
        return 0.5 * np.linalg.norm(
            np.cross(v[s[:, 1]] - v[s[:, 0]], v[s[:, 2]] - v[s[:, 0]]), axis=1)
    return np.abs(signed_volumes(v, s))


def _inradii(mesh):
    v, s = mesh.vertices, mesh.simplices
    meas = simplex_measures(mesh)
    if mesh.simplex_dim == 2:
        perim = sum(np.linalg.norm(v[s[:, i]] - v[s[:, j]], axis=1) for i, j in TRI_EDGES)
        return 2 * meas / perim
    area = 0.0
    for f in TET_FACES:
        a, b, c = (v[s[:, i]] for i in f)
        area = area + 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    return 3 * meas / area


def mesh_size(mesh: SimplicialMesh, node_positions=None, element_nodes=None) -> MeshSize:
    """Element diameters measured over the element's Lagrange node positions.

    Without ``element_nodes`` the element nodes are the simplex vertices,
    taken from ``node_positions`` (default: the mesh vertices).
    """
    pos = mesh.vertices if node_positions is None else np.asarray(node_positions)
    conn = mesh.simplices if element_nodes is None else np.asarray(element_nodes)
    p = pos[conn]  # (ne, nk, 3)
    diam = np.zeros(len(conn))
    for i, j in combinations(range(conn.shape[1]), 2):
        diam = np.maximum(diam, np.linalg.norm(p[:, i] - p[:, j], axis=1))
    return MeshSize(float(diam.max()), float(diam.min()), float(_inradii(mesh).min()))


# -------------------------------------------------------------- validation

def check_closed_surface(mesh: SimplicialMesh) -> None:
    """Every directed edge appears once and its reverse once."""
    s = mesh.simplices
    directed = s[:, TRI_EDGES].reshape(-1, 2)
    nv = mesh.n_vertices
    fwd = directed[:, 0] * nv + directed[:, 1]
    rev = directed[:, 1] * nv + directed[:, 0]
    if len(np.unique(fwd)) != len(fwd):
        raise InvalidMeshError("directed edge used twice (orientation or manifoldness broken)")
    if not np.array_equal(np.sort(fwd), np.sort(rev)):
        raise InvalidMeshError("edge without opposite neighbour")


def check_conforming(mesh: SimplicialMesh) -> None:
    """Face-hashing conformity and non-degeneracy checks; raises on failure."""
    if np.any(simplex_measures(mesh) <= 0):
        raise InvalidMeshError("degenerate simplex")
    if mesh.simplex_dim == 2:
        check_closed_surface(mesh)
        return
    vol = signed_volumes(mesh.vertices, mesh.simplices)
    faces, _, _ = _boundary_faces(mesh)
    if mesh.boundary is not None:
        if not mesh.boundary[np.unique(faces)].all():
            raise InvalidMeshError("boundary face with unflagged vertex")
    # orientation: every interior face is seen once in each direction
    f = mesh.simplices[:, TET_FACES]
    neg = vol < 0
    f[neg] = f[neg][:, :, [0, 2, 1]]
    canon = _cyclic_canonical(f.reshape(-1, 3))
    keys = {tuple(r) for r in canon}
    if len(keys) != len(canon):
        raise InvalidMeshError("face traversed twice in the same direction")


def _cyclic_canonical(f):
    """Rotate each oriented triangle so its smallest index comes first."""
    r = np.argmin(f, axis=1)
    idx = (r[:, None] + np.arange(3)) % 3
    return np.take_along_axis(f, idx, axis=1)
