import numpy as np
import pytest

from evolfem.errors import ConstructionError, DegenerateElementError, InvalidMeshError
from evolfem.fespace import (EvolvingSpace, build_bulk_space, build_surface_space,
                             build_trace_map, discrete_measure, element_geometry,
                             geometry_batch, interpolate, lattice_subsimplices,
                             node_positions_at)
from evolfem.geometry import DEFAULT_EVOLUTION
from evolfem.mesh import (SimplicialMesh, ball_mesh, boundary_surface, macro_ball_bulk,
                          macro_sphere_surface, sphere_mesh)
from evolfem.refelem import eval_basis, make_quadrature, make_reference

ICO_EDGE = 4 / np.sqrt(10 + 2 * np.sqrt(5))


def flat_space(vertices, simplices, kind):
    dim = len(simplices[0]) - 1
    mesh = SimplicialMesh(vertices, simplices)
    keys = np.arange(len(vertices))[:, None]
    return EvolvingSpace(kind, make_reference(dim, 1), mesh, np.array(simplices), keys,
                         mesh.vertices.copy(), DEFAULT_EVOLUTION)


def test_surface_p1_nodes_are_vertices(icosahedron):
    space = build_surface_space(icosahedron, 1)
    np.testing.assert_array_equal(space.initial_nodes, icosahedron.vertices)
    np.testing.assert_array_equal(space.element_dofs, icosahedron.simplices)


def test_surface_p2_icosahedron(icosahedron):
    space = build_surface_space(icosahedron, 2)
    assert space.dof_count == 42
    assert np.abs(np.linalg.norm(space.initial_nodes, axis=1) - 1).max() <= 1e-15
    # vertex dofs come first
    np.testing.assert_array_equal(space.initial_nodes[:12], icosahedron.vertices)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_surface_nodes_stay_on_surface(order):
    space = build_surface_space(sphere_mesh(1), order)
    for t in (0.0, 0.5, 1.0):
        x = node_positions_at(space, t)
        assert np.abs(DEFAULT_EVOLUTION.level_set(x, t)).max() <= 1e-10
    assert np.abs(DEFAULT_EVOLUTION.level_set(space.initial_nodes, 0)).max() <= 1e-12


def test_surface_shared_nodes_single_index():
    space = build_surface_space(sphere_mesh(1), 3)
    positions = np.round(space.initial_nodes, 12)
    assert len(np.unique(positions, axis=0)) == space.dof_count
    # 42 vertices, two nodes on each of 120 edges, one inside each of 80 triangles
    assert space.dof_count == 42 + 2 * 120 + 80


def test_surface_off_sphere_rejected():
    m = macro_sphere_surface()
    with pytest.raises(InvalidMeshError):
        build_surface_space(SimplicialMesh(1.01 * m.vertices, m.simplices), 1)


def test_node_positions_at_examples(icosahedron):
    space = build_surface_space(icosahedron, 2)
    np.testing.assert_array_equal(node_positions_at(space, 0.0), space.initial_nodes)
    v = flat_space([[1.0, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2]], "surface")
    np.testing.assert_allclose(node_positions_at(v, np.pi / 2)[0], [np.sqrt(1.25), 0, 0])
    still = np.abs(space.initial_nodes[:, 0]) < 1e-15
    assert still.any()
    np.testing.assert_array_equal(node_positions_at(space, 0.9)[still], space.initial_nodes[still])


@pytest.mark.parametrize("order", [1, 2, 3])
def test_bulk_node_invariants(order):
    space = build_bulk_space(ball_mesh(1), order)
    psi = DEFAULT_EVOLUTION.level_set(space.initial_nodes, 0.0)
    keys = space.node_keys
    bs = boundary_surface(space.mesh)
    on_boundary_face = np.zeros(space.dof_count, bool)
    faces = {tuple(sorted(f)) for f in bs.vertex_map[bs.mesh.simplices]}
    for i, key in enumerate(keys):
        verts = tuple(sorted(set(key)))
        on_boundary_face[i] = any(set(verts) <= set(f) for f in faces) and space.mesh.boundary[list(verts)].all()
    assert np.abs(psi[on_boundary_face]).max() <= 1e-12
    assert np.all(psi[~on_boundary_face] < 0)


def test_bulk_blending_examples():
    mesh = macro_ball_bulk()
    space = build_bulk_space(mesh, 2)
    nodes = space.initial_nodes
    # boundary vertices are unchanged, the centre too
    np.testing.assert_array_equal(nodes[:7], mesh.vertices)
    # boundary-face edge midpoints are projected midpoints
    for i, (a, b) in enumerate(space.node_keys[7:], start=7):
        mid = (mesh.vertices[a] + mesh.vertices[b]) / 2
        if mesh.boundary[a] and mesh.boundary[b]:
            np.testing.assert_allclose(nodes[i], mid / np.linalg.norm(mid), atol=1e-15)
        else:
            # edges towards the centre: l* = 1/2 so the shift is (1/2)^4 (p(y) - y)
            y = mesh.vertices[a if mesh.boundary[a] else b]
            np.testing.assert_allclose(nodes[i], mid, atol=1e-15)
            assert np.allclose(np.linalg.norm(y), 1)


def test_bulk_interior_elements_are_affine():
    mesh = ball_mesh(2)
    space = build_bulk_space(mesh, 2)
    interior = mesh.boundary[mesh.simplices].sum(axis=1) < 2
    assert interior.any()
    ref = make_reference(3, 2)
    for e in np.flatnonzero(interior)[:20]:
        affine = ref.nodes @ mesh.vertices[mesh.simplices[e]]
        np.testing.assert_allclose(space.initial_nodes[space.element_dofs[e]], affine, atol=1e-15)


def test_bulk_off_sphere_rejected():
    m = macro_ball_bulk()
    with pytest.raises(InvalidMeshError):
        build_bulk_space(SimplicialMesh(0.9 * m.vertices, m.simplices, m.boundary), 1)
    with pytest.raises(InvalidMeshError):
        build_bulk_space(SimplicialMesh(m.vertices, m.simplices), 1)


def test_flat_triangle_geometry():
    space = flat_space([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], "surface")
    g = element_geometry(space, 0, 0.0, make_quadrature(2, 2))
    np.testing.assert_allclose(g.sqrt_g, 1.0)
    for q in range(len(g.weights)):
        np.testing.assert_allclose(g.physical_basis_gradients[q], [[-1, -1, 0], [1, 0, 0], [0, 1, 0]], atol=1e-15)
    np.testing.assert_allclose(g.unit_normal, np.tile([0, 0, 1.0], (len(g.weights), 1)))


def test_reference_tet_geometry():
    space = flat_space([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2, 3]], "bulk")
    g = element_geometry(space, 0, 0.0)
    np.testing.assert_allclose(g.measure, 1.0)
    assert g.dx.sum() == pytest.approx(1 / 6, abs=1e-15)
    assert discrete_measure(space, 0.0) == pytest.approx(1 / 6, abs=1e-15)


def test_degenerate_element_rejected():
    space = flat_space([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]], "surface")
    with pytest.raises(DegenerateElementError):
        geometry_batch(space, 0.0)
    tet = flat_space([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2, 3]], "bulk")
    with pytest.raises(DegenerateElementError):
        geometry_batch(tet, 0.0)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_surface_geometry_invariants(order):
    space = build_surface_space(sphere_mesh(1), order)
    g = geometry_batch(space, 0.7)
    assert g.sqrt_g.min() > 0
    assert np.abs(g.gradients.sum(axis=2)).max() <= 1e-12
    dots = np.einsum("eqnc,eqc->eqn", g.gradients, g.unit_normal)
    assert np.abs(dots).max() <= 1e-12
    # G = J^T J
    np.testing.assert_allclose(g.gram, np.swapaxes(g.jacobian, -1, -2) @ g.jacobian, atol=1e-15)


@pytest.mark.parametrize("order", [1, 2])
def test_bulk_geometry_invariants(order, ball_p2):
    space = ball_p2 if order == 2 else build_bulk_space(ball_mesh(1), 1)
    g = geometry_batch(space, 0.3)
    assert g.measure.min() > 0
    assert np.abs(g.gradients.sum(axis=2)).max() <= 1e-12
    # gradients of x1, x2, x3 are the unit vectors (isoparametric reproduction)
    X = node_positions_at(space, 0.3)[space.element_dofs]
    grad_x = np.einsum("eqnc,end->eqdc", g.gradients, X)
    np.testing.assert_allclose(grad_x, np.broadcast_to(np.eye(3), grad_x.shape), atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_isoparametric_map_hits_nodes(order):
    space = build_surface_space(sphere_mesh(1), order)
    ref = space.reference
    X = node_positions_at(space, 0.4)[space.element_dofs]
    F = np.einsum("in,enc->eic", eval_basis(ref, ref.nodes), X)
    np.testing.assert_allclose(F, X, atol=1e-15)


def test_icosahedron_area(icosahedron):
    area = 20 * np.sqrt(3) / 4 * ICO_EDGE ** 2
    assert area == pytest.approx(9.5746, abs=1e-4)
    assert discrete_measure(build_surface_space(icosahedron, 1), 0.0) == pytest.approx(area, abs=1e-13)


@pytest.mark.parametrize("order", [1, 2])
def test_sphere_area_convergence(order):
    errs, hs = [], []
    for level in range(5):
        space = build_surface_space(sphere_mesh(level), order)
        errs.append(abs(discrete_measure(space, 0.0) - 4 * np.pi))
        hs.append(space.mesh_size().h_max)
    eoc = np.log(np.array(errs[1:]) / errs[:-1]) / np.log(np.array(hs[1:]) / hs[:-1])
    assert np.all(eoc >= order + 0.7), eoc


@pytest.mark.parametrize("order", [1, 2])
def test_ball_volume_convergence(order):
    errs, hs = [], []
    for level in range(4):
        space = build_bulk_space(ball_mesh(level), order)
        errs.append(abs(discrete_measure(space, 0.0) - 4 * np.pi / 3))
        hs.append(space.mesh_size().h_max)
    eoc = np.log(np.array(errs[1:]) / errs[:-1]) / np.log(np.array(hs[1:]) / hs[:-1])
    assert np.all(eoc >= order + 0.7), eoc


def test_discrete_area_at_later_time():
    # ellipsoid with semi-axes sqrt(a), 1, 1 at t = pi/2: a = 1.25
    a = 1.25
    e = np.sqrt(1 - 1 / a)
    exact = 2 * np.pi * (1 + np.sqrt(a) * np.arcsin(e) / e)
    space = build_surface_space(sphere_mesh(3), 3)
    assert discrete_measure(space, np.pi / 2) == pytest.approx(exact, rel=1e-5)


def test_trace_map_macro_ball():
    mesh = macro_ball_bulk()
    bs = boundary_surface(mesh)
    for order, count in ((1, 6), (2, 18)):
        bulk = build_bulk_space(mesh, order)
        surf = build_surface_space(bs.mesh, order)
        tm = build_trace_map(bulk, surf, bs)
        assert len(tm) == count
        assert len(np.unique(tm.bulk_dofs)) == count
        np.testing.assert_array_equal(bulk.initial_nodes[tm.bulk_dofs], surf.initial_nodes)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_trace_map_refined(order):
    mesh = ball_mesh(2)
    bs = boundary_surface(mesh)
    bulk = build_bulk_space(mesh, order)
    surf = build_surface_space(bs.mesh, order)
    tm = build_trace_map(bulk, surf, bs)
    assert np.abs(bulk.initial_nodes[tm.bulk_dofs] - surf.initial_nodes).max() <= 1e-12


def test_trace_map_order_mismatch():
    mesh = macro_ball_bulk()
    bs = boundary_surface(mesh)
    with pytest.raises(ConstructionError):
        build_trace_map(build_bulk_space(mesh, 2), build_surface_space(bs.mesh, 1), bs)


def test_interpolate_reproduces_linear(sphere_p2):
    f = lambda x, t: 2 * x[..., 0] - x[..., 2] + t
    vals = interpolate(sphere_p2, f, 0.5)
    np.testing.assert_allclose(vals, f(node_positions_at(sphere_p2, 0.5), 0.5))


@pytest.mark.parametrize("dim,order,count", [(2, 1, 1), (2, 2, 4), (2, 3, 9), (3, 1, 1), (3, 2, 8)])
def test_lattice_subsimplices(dim, order, count):
    cells = lattice_subsimplices(dim, order)
    assert cells.shape == (count, dim + 1)
    ref = make_reference(dim, order)
    pts = ref.nodes[:, 1:]
    vol = 0.0
    for c in cells:
        d = pts[c[1:]] - pts[c[0]]
        vol += abs(np.linalg.det(d))
    assert vol == pytest.approx(1.0)   # sub-simplices tile the reference simplex (scaled by dim!)
