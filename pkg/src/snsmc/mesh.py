"""Uniform triangulations of the unit square.

Every square cell of an n-by-n grid is split along its lower-left to
upper-right diagonal, giving 2*n^2 congruent right triangles listed
counterclockwise. Edge data (with midpoints) is provided because the
quadratic velocity space places nodes on edge midpoints.

The mesh size reported alongside results is h = 1/n, the cell side; the
longest edge is the diagonal of length sqrt(2)/n. Convergence orders are
unaffected by that constant factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snsmc.errors import ConfigurationError


@dataclass(frozen=True)
class Mesh:
    """Triangulation of (0,1)^2 with incidence data.

    Attributes:
        n: subdivisions per side.
        vertices: (nv, 2) coordinates.
        triangles: (nt, 3) vertex indices, counterclockwise.
        edges: (ne, 2) vertex indices with edges[e, 0] < edges[e, 1].
        edge_midpoints: (ne, 2) coordinates.
        triangle_edges: (nt, 3) edge indices; local edge i joins local
            vertices i and (i+1) % 3, matching the quadratic midpoint
            node convention in the dof map.
        boundary_vertex: (nv,) bool.
        boundary_edge: (ne,) bool, true iff the edge belongs to exactly
            one triangle.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_midpoints: np.ndarray
    triangle_edges: np.ndarray
    boundary_vertex: np.ndarray
    boundary_edge: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h(self) -> float:
        """Cell side length 1/n."""
        return 1.0 / self.n


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.flags.writeable = False


def build_uniform_mesh(n: int) -> Mesh:
    """Build the uniform n-by-n triangulation of the unit square.

    Raises:
        ConfigurationError: if n < 1.
    """
    if n < 1:
        raise ConfigurationError(f"subdivision count must be >= 1, got {n}")

    side = n + 1
    xs = np.arange(side) / n
    gy, gx = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(ix, iy):
        return iy * side + ix

    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    t = 0
    for iy in range(n):
        for ix in range(n):
            a = vid(ix, iy)
            b = vid(ix + 1, iy)
            c = vid(ix + 1, iy + 1)
            d = vid(ix, iy + 1)
            triangles[t] = (a, b, c)
            triangles[t + 1] = (a, c, d)
            t += 2

    # Edges keyed by sorted vertex pair; local edge i = (v_i, v_{i+1 mod 3}).
    edge_index: dict[tuple[int, int], int] = {}
    edge_list: list[tuple[int, int]] = []
    edge_count = np.zeros(3 * n * n + 2 * n, dtype=np.int64)
    triangle_edges = np.empty((2 * n * n, 3), dtype=np.int64)
    for t, tri in enumerate(triangles):
        for i in range(3):
            a, b = tri[i], tri[(i + 1) % 3]
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edge_list)
                edge_index[key] = e
                edge_list.append(key)
            triangle_edges[t, i] = e
            edge_count[e] += 1

    edges = np.array(edge_list, dtype=np.int64)
    edge_midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    boundary_vertex = _on_boundary(vertices)
    boundary_edge = edge_count[: len(edge_list)] == 1

    mesh = Mesh(
        n=n,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_midpoints=edge_midpoints,
        triangle_edges=triangle_edges,
        boundary_vertex=boundary_vertex,
        boundary_edge=boundary_edge,
    )
    _freeze(vertices, triangles, edges, edge_midpoints, triangle_edges,
            boundary_vertex, boundary_edge)
    return mesh


def _on_boundary(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return (
        (np.abs(x) <= tol)
        | (np.abs(x - 1.0) <= tol)
        | (np.abs(y) <= tol)
        | (np.abs(y - 1.0) <= tol)
    )


def triangle_area(mesh: Mesh, t: int) -> float:
    """Signed area of triangle t (positive for counterclockwise)."""
    v0, v1, v2 = mesh.vertices[mesh.triangles[t]]
    a, b = v1 - v0, v2 - v0
    return 0.5 * float(a[0] * b[1] - a[1] * b[0])


def locate_point(mesh: Mesh, x) -> tuple[int, np.ndarray]:
    """Find the triangle containing x and its barycentric coordinates.

    Points on shared edges resolve to one of the adjacent triangles;
    the returned coordinates always reconstruct x to machine precision.

    Raises:
        ConfigurationError: if x lies outside the closed unit square.
    """
    px, py = float(x[0]), float(x[1])
    if not (-1e-12 <= px <= 1.0 + 1e-12 and -1e-12 <= py <= 1.0 + 1e-12):
        raise ConfigurationError(f"point {(px, py)} outside the closed unit square")
    n = mesh.n
    ix = min(int(px * n), n - 1)
    iy = min(int(py * n), n - 1)
    # Local cell coordinates; diagonal runs from (0,0) to (1,1).
    xi = px * n - ix
    eta = py * n - iy
    cell = 2 * (iy * n + ix)
    t = cell if eta <= xi else cell + 1
    v0, v1, v2 = mesh.vertices[mesh.triangles[t]]
    mat = np.column_stack([v1 - v0, v2 - v0])
    lam12 = np.linalg.solve(mat, np.array([px, py]) - v0)
    bary = np.array([1.0 - lam12[0] - lam12[1], lam12[0], lam12[1]])
    bary = np.clip(bary, 0.0, 1.0)
    bary /= bary.sum()
    return t, bary


def dump_mesh(mesh: Mesh, path) -> None:
    """Write a plain-text mesh listing (debugging aid, not a stable format)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# uniform mesh n={mesh.n}\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"v {i} {float(x)!r} {float(y)!r}\n")
        for t, tri in enumerate(mesh.triangles):
            fh.write(f"t {t} {tri[0]} {tri[1]} {tri[2]}\n")
