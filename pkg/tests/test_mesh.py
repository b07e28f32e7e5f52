import numpy as np
import pytest

from snsmc.errors import ConfigurationError
from snsmc.mesh import build_uniform_mesh, dump_mesh, locate_point, triangle_area


def test_smallest_mesh_counts():
    m = build_uniform_mesh(1)
    assert (m.num_vertices, m.num_triangles, m.num_edges) == (4, 2, 5)


def test_counting_formulas_and_euler():
    for n in (1, 2, 3, 4, 5, 7):
        m = build_uniform_mesh(n)
        assert m.num_vertices == (n + 1) ** 2
        assert m.num_triangles == 2 * n**2
        assert m.num_edges == 3 * n**2 + 2 * n
        # Euler formula with the outer face included.
        assert m.num_vertices - m.num_edges + (m.num_triangles + 1) == 2


def test_n4_counts():
    m = build_uniform_mesh(4)
    assert (m.num_vertices, m.num_triangles, m.num_edges) == (25, 32, 56)


def test_boundary_vertex_counts_n2():
    m = build_uniform_mesh(2)
    assert int(m.boundary_vertex.sum()) == 8
    assert int((~m.boundary_vertex).sum()) == 1


def test_rejects_zero_subdivisions():
    with pytest.raises(ConfigurationError):
        build_uniform_mesh(0)


@pytest.mark.parametrize("n", [1, 3, 4])
def test_signed_areas(n):
    m = build_uniform_mesh(n)
    areas = np.array([triangle_area(m, t) for t in range(m.num_triangles)])
    assert np.all(areas > 0)
    assert np.allclose(areas, 1.0 / (2 * n**2), rtol=1e-13)
    assert abs(areas.sum() - 1.0) <= 1e-14


def test_edge_sharing_and_boundary_flags():
    m = build_uniform_mesh(4)
    counts = np.zeros(m.num_edges, dtype=int)
    for edges in m.triangle_edges:
        for e in edges:
            counts[e] += 1
    assert set(counts.tolist()) == {1, 2}
    assert np.array_equal(m.boundary_edge, counts == 1)
    # Geometric characterization: boundary iff the midpoint lies on the
    # boundary of the square (no diagonal can satisfy this).
    mid = m.edge_midpoints
    on_bdry = (
        (mid[:, 0] == 0) | (mid[:, 0] == 1) | (mid[:, 1] == 0) | (mid[:, 1] == 1)
    )
    assert np.array_equal(m.boundary_edge, on_bdry)


def test_interior_edges_traversed_oppositely():
    m = build_uniform_mesh(3)
    traversals = {}
    for tri in m.triangles:
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            traversals.setdefault(frozenset((a, b)), []).append((a, b))
    for key, ts in traversals.items():
        if len(ts) == 2:
            assert ts[0] == ts[1][::-1]


def test_locate_origin_vertex():
    m = build_uniform_mesh(4)
    t, bary = locate_point(m, (0.0, 0.0))
    verts = m.vertices[m.triangles[t]]
    i = int(np.argmax(bary))
    assert np.allclose(verts[i], [0.0, 0.0])
    expected = np.zeros(3)
    expected[i] = 1.0
    assert np.allclose(bary, expected, atol=1e-14)


def test_locate_centroid():
    m = build_uniform_mesh(4)
    for t in (0, 5, 17):
        c = m.vertices[m.triangles[t]].mean(axis=0)
        t_found, bary = locate_point(m, c)
        assert t_found == t
        assert np.allclose(bary, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


def test_locate_closed_corner():
    m = build_uniform_mesh(2)
    t, bary = locate_point(m, (1.0, 1.0))
    x = bary @ m.vertices[m.triangles[t]]
    assert np.allclose(x, [1.0, 1.0], atol=1e-12)


def test_locate_roundtrip_random():
    m = build_uniform_mesh(5)
    rng = np.random.default_rng(42)
    pts = rng.uniform(0, 1, size=(1000, 2))
    for p in pts:
        t, bary = locate_point(m, p)
        assert np.all(bary >= 0) and abs(bary.sum() - 1) <= 1e-12
        rec = bary @ m.vertices[m.triangles[t]]
        assert np.max(np.abs(rec - p)) <= 1e-12


def test_locate_rejects_outside():
    m = build_uniform_mesh(2)
    with pytest.raises(ConfigurationError):
        locate_point(m, (1.2, 0.5))
    with pytest.raises(ConfigurationError):
        locate_point(m, (0.5, -0.1))


def test_dump_mesh(tmp_path):
    m = build_uniform_mesh(2)
    out = tmp_path / "mesh.txt"
    dump_mesh(m, out)
    lines = out.read_text().splitlines()
    assert len([l for l in lines if l.startswith("v ")]) == m.num_vertices
    assert len([l for l in lines if l.startswith("t ")]) == m.num_triangles


def test_mesh_arrays_immutable():
    m = build_uniform_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
