"""Plain-text mesh files and legacy VTK snapshots."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidMeshError
from .fespace import EvolvingSpace, lattice_subsimplices, node_positions_at
from .mesh import SimplicialMesh

MESH_MAGIC = "evolfem-mesh"
MESH_VERSION = "v1"

# legacy VTK cell type ids
_VTK_TRIANGLE = 5
_VTK_TETRA = 10


def write_mesh(path, mesh: SimplicialMesh) -> None:
    """Write ``mesh`` in the ``evolfem-mesh v1`` ASCII format.

    Coordinates use ``repr`` so that a round trip is exact.
    """
    lines = [f"{MESH_MAGIC} {MESH_VERSION} {mesh.simplex_dim} "
             f"{mesh.n_vertices} {mesh.n_simplices}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in s) for s in mesh.simplices]
    if mesh.boundary is not None:
        flagged = np.flatnonzero(mesh.boundary)
        lines.append(f"boundary {len(flagged)}")
        lines += [str(int(i)) for i in flagged]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialMesh:
    """Inverse of :func:`write_mesh`."""
    tokens = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not tokens or tokens[0][:2] != [MESH_MAGIC, MESH_VERSION] or len(tokens[0]) != 5:
        raise InvalidMeshError(f"{path}: not an {MESH_MAGIC} {MESH_VERSION} file")
    try:
        dim, nv, ns = (int(x) for x in tokens[0][2:])
        body = tokens[1:]
        vertices = np.array(body[:nv], dtype=float)
        simplices = np.array(body[nv:nv + ns], dtype=np.int64)
    except ValueError as exc:
        raise InvalidMeshError(f"{path}: malformed mesh file ({exc})") from None
    if len(vertices) != nv or len(simplices) != ns:
        raise InvalidMeshError(f"{path}: truncated mesh file")
    if ns and simplices.shape[1] != dim + 1:
        raise InvalidMeshError(f"{path}: simplices do not have {dim + 1} vertices")
    rest = body[nv + ns:]
    boundary = None
    if rest:
        if rest[0][0] != "boundary":
            raise InvalidMeshError(f"{path}: unexpected trailing data")
        flagged = np.array([int(r[0]) for r in rest[1:]], dtype=np.int64)
        if flagged.size and (flagged.min() < 0 or flagged.max() >= nv):
            raise InvalidMeshError(f"{path}: boundary index out of range")
        boundary = np.zeros(nv, dtype=bool)
        boundary[flagged] = True
    if ns == 0:
        simplices = simplices.reshape(0, dim + 1)
    return SimplicialMesh(vertices.reshape(nv, 3), simplices, boundary)


def _write_vtk(path, points, cells, point_data=None, title="evolfem"):
    ctype = _VTK_TRIANGLE if cells.shape[1] == 3 else _VTK_TETRA
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(points)} double"]
    out += [" ".join(repr(float(c)) for c in p) for p in points]
    out.append(f"CELLS {len(cells)} {cells.size + len(cells)}")
    out += [" ".join(map(str, (len(c), *c))) for c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(ctype)] * len(cells)
    if point_data:
        out.append(f"POINT_DATA {len(points)}")
        for name, vals in point_data.items():
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [repr(float(v)) for v in vals]
    Path(path).write_text("\n".join(out) + "\n")


def write_mesh_vtk(path, mesh: SimplicialMesh) -> None:
    """Legacy VTK (ASCII, unstructured grid) export of a mesh snapshot."""
    _write_vtk(path, mesh.vertices, mesh.simplices)


def write_space_vtk(path, space: EvolvingSpace, t: float, values=None, name="u") -> None:
    """Write the moved nodes of ``space`` at time ``t`` with nodal values.

    Higher order elements are split into flat sub-simplices on their Lagrange
    lattice, which is what VTK viewers can display.
    """
    nodes = node_positions_at(space, t)
    split = lattice_subsimplices(space.reference.dim, space.order)
    cells = space.element_dofs[:, split].reshape(-1, split.shape[1])
    data = None
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.shape != (space.dof_count,):
            raise ValueError("values must have one entry per dof")
        data = {name: values}
    _write_vtk(path, nodes, cells, data, title=f"{space.kind} k={space.order} t={t!r}")
