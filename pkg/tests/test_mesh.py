import numpy as np
import pytest

from dgmorph.mesh import (
    LAND,
    FLOW,
    MeshError,
    build_mesh,
    build_strip_mesh,
    edge_geometry,
    read_mesh,
    retag_boundary,
    write_mesh,
)


def test_unit_square_smallest_mesh():
    m = build_strip_mesh(1, 1, (0, 1), (0, 1))
    assert m.n_elements == 2
    assert m.n_edges == 5
    assert m.interior_edges.size == 1
    assert m.boundary_edges.size == 4
    assert np.all(m.edge_tag[m.boundary_edges] == LAND)


def test_strip_mesh_element_count_matches_cell_layout():
    m = build_strip_mesh(500, 1, (-5000, 5000), (-10, 10))
    assert m.n_elements == 1000
    assert np.isclose(m.areas.sum(), 10000 * 20)


def test_interior_vertical_edge_normal_points_right():
    m = build_strip_mesh(2, 1, (0, 2), (0, 1))
    mids = m.edge_midpoints()
    interior = m.interior_edges
    vert = interior[np.isclose(mids[interior, 0], 1.0) & ~np.isclose(mids[interior, 1], 0.5)]
    # the vertical edge at x = 1 (exclude diagonal midpoints which also sit at x=1)
    vert = [e for e in interior if np.isclose(mids[e, 0], 1.0)
            and np.isclose(m.vertices[m.edges[e, 0], 0], 1.0)
            and np.isclose(m.vertices[m.edges[e, 1], 0], 1.0)]
    assert len(vert) == 1
    e = vert[0]
    left = m.edge_elems[e, 0]
    assert m.centroids[left, 0] < 1.0  # left cell is the left element
    assert np.allclose(m.edge_normal[e], [1.0, 0.0], atol=1e-14)


def test_triangles_ccw_and_positive_area():
    m = build_strip_mesh(3, 2, (0, 3), (0, 2))
    v = m.vertices[m.triangles]
    cross = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
        v[:, 1, 1] - v[:, 0, 1]
    ) * (v[:, 2, 0] - v[:, 0, 0])
    assert np.all(cross > 0)
    assert np.all(m.areas > 0)


def test_per_element_edge_closure():
    m = build_strip_mesh(4, 3, (0, 2), (0, 1.5))
    nt = m.n_elements
    closure = np.zeros((nt, 2))
    for t in range(nt):
        for k in range(3):
            e = m.elem_edges[t, k]
            sgn = 1.0 if m.edge_elems[e, 0] == t else -1.0
            closure[t] += sgn * m.edge_length[e] * m.edge_normal[e]
    assert np.max(np.abs(closure)) < 1e-12


def test_skeleton_counts_interior_edges_once():
    m = build_strip_mesh(5, 2, (0, 5), (0, 2))
    n_int = m.interior_edges.size
    n_bnd = m.boundary_edges.size
    assert 3 * m.n_elements == 2 * n_int + n_bnd
    assert n_int + n_bnd == m.n_edges


def test_mesh_file_round_trip(tmp_path):
    m = build_strip_mesh(1, 1, (0, 1), (0, 1))
    path = tmp_path / "unit.mesh"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.allclose(m.vertices, m2.vertices)
    assert np.array_equal(m.edge_tag, m2.edge_tag)


def test_duplicate_triangle_is_non_manifold():
    verts = [(0, 0), (1, 0), (0, 1)]
    tris = [(0, 1, 2), (0, 1, 2)]
    with pytest.raises(MeshError, match="repeats|non-manifold"):
        build_mesh(verts, tris)


def test_degenerate_range_rejected():
    with pytest.raises(MeshError, match="degenerate"):
        build_strip_mesh(2, 2, (1, 1), (0, 1))
    with pytest.raises(MeshError):
        build_strip_mesh(0, 1, (0, 1), (0, 1))


def test_zero_area_triangle_rejected():
    verts = [(0, 0), (1, 0), (2, 0)]
    with pytest.raises(MeshError, match="area"):
        build_mesh(verts, [(0, 1, 2)])


def test_edge_geometry_axis_aligned_normal_and_length():
    m = build_strip_mesh(1, 1, (0, 1), (0, 1))
    for e in range(m.n_edges):
        n, ln, _ = edge_geometry(m, e)
        assert np.isclose(np.hypot(*n), 1.0, atol=1e-14)
        mid = m.edge_midpoints()[e]
        if np.isclose(mid[1], 0.0):  # bottom horizontal edge
            assert np.allclose(np.abs(n), [0, 1])
            assert np.isclose(ln, 1.0)
    diag = m.interior_edges[0]
    _, ln, _ = edge_geometry(m, diag)
    assert np.isclose(ln, np.sqrt(2.0), rtol=1e-14)


def test_trace_map_images_coincide_physically():
    m = build_strip_mesh(3, 2, (0, 3), (-1, 1))
    t = np.linspace(0.05, 0.95, 7)
    for e in m.interior_edges:
        n, ln, tmap = edge_geometry(m, e)
        refL, refR = tmap(t)
        eL, eR = m.edge_elems[e]

        def to_phys(elem, ref):
            tri = m.triangles[elem]
            v0 = m.vertices[tri[0]]
            J = np.column_stack([m.vertices[tri[1]] - v0, m.vertices[tri[2]] - v0])
            return v0[None, :] + ref @ J.T

        pL = to_phys(eL, refL)
        pR = to_phys(eR, refR)
        assert np.max(np.abs(pL - pR)) < 1e-12


def test_retag_boundary_box():
    m = build_strip_mesh(4, 1, (0, 4), (0, 1))
    n = retag_boundary(m, (-0.1, 0.1, -0.1, 1.1), FLOW)
    assert n == 1
    tagged = m.boundary_edges[m.edge_tag[m.boundary_edges] == FLOW]
    assert tagged.size == 1
    assert np.isclose(m.edge_midpoints()[tagged[0], 0], 0.0)
