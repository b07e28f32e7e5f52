"""Taylor-Hood reference elements, quadrature, and degree-of-freedom maps.

Velocity is continuous piecewise-quadratic (P2) per component, pressure
continuous piecewise-linear (P1). Scalar velocity nodes are the mesh
vertices followed by the edge midpoints, so node v < nv is vertex v and
node nv + e is the midpoint of edge e.

Velocity dof ordering is component-blocked and fixed everywhere in the
package: dof c * num_scalar_nodes + s holds component c of scalar node s
(x block first, then y block). Pressure dofs are the mesh vertices.

Local P2 node order on a triangle is (v0, v1, v2, m01, m12, m20) where
mij is the midpoint of local edge (vi, vj); barycentric-coordinate bases
follow the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snsmc.mesh import Mesh, locate_point


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on the reference triangle {(0,0),(1,0),(0,1)}.

    points holds barycentric triples; weights sum to the reference area
    1/2 and integrate all polynomials of total degree <= degree exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _degree5_rule() -> QuadratureRule:
    # Classical 7-point degree-5 rule (centroid + two symmetric orbits).
    a = (6.0 + np.sqrt(15.0)) / 21.0
    b = (6.0 - np.sqrt(15.0)) / 21.0
    wa = (155.0 + np.sqrt(15.0)) / 1200.0
    wb = (155.0 - np.sqrt(15.0)) / 1200.0
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9.0 / 40.0]
    for lam, w in ((a, wa), (b, wb)):
        mu = 1.0 - 2.0 * lam
        pts += [(lam, lam, mu), (lam, mu, lam), (mu, lam, lam)]
        wts += [w, w, w]
    points = np.array(pts)
    weights = 0.5 * np.array(wts)
    points.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(points=points, weights=weights, degree=5)


# Degree 5 makes the skew-symmetrized convection form exact on affine
# triangles (its integrands have total degree <= 5 for P2 fields).
TRIANGLE_QUADRATURE = _degree5_rule()


def p2_basis(bary) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic Lagrange basis values and barycentric-gradient pairs.

    Accepts one barycentric triple or an (m, 3) array. Returns values of
    shape (..., 6) and reference gradients of shape (..., 6, 2) taken
    with respect to the reference coordinates (xi, eta) = (lam1, lam2).
    """
    lam = np.atleast_2d(np.asarray(bary, dtype=float))
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    vals = np.stack(
        [
            l0 * (2 * l0 - 1),
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            4 * l0 * l1,
            4 * l1 * l2,
            4 * l2 * l0,
        ],
        axis=-1,
    )
    # d lam / d (xi, eta): lam0 -> (-1,-1), lam1 -> (1,0), lam2 -> (0,1).
    g0 = np.array([-1.0, -1.0])
    g1 = np.array([1.0, 0.0])
    g2 = np.array([0.0, 1.0])
    grads = np.empty(lam.shape[:-1] + (6, 2))
    grads[..., 0, :] = (4 * l0 - 1)[..., None] * g0
    grads[..., 1, :] = (4 * l1 - 1)[..., None] * g1
    grads[..., 2, :] = (4 * l2 - 1)[..., None] * g2
    grads[..., 3, :] = 4 * (l0[..., None] * g1 + l1[..., None] * g0)
    grads[..., 4, :] = 4 * (l1[..., None] * g2 + l2[..., None] * g1)
    grads[..., 5, :] = 4 * (l2[..., None] * g0 + l0[..., None] * g2)
    if np.asarray(bary).ndim == 1:
        return vals[0], grads[0]
    return vals, grads


def p1_basis(bary) -> tuple[np.ndarray, np.ndarray]:
    """Linear basis: values are the barycentric coordinates themselves."""
    lam = np.asarray(bary, dtype=float)
    grads = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if lam.ndim == 1:
        return lam.copy(), grads.copy()
    return lam.copy(), np.broadcast_to(grads, lam.shape[:-1] + (3, 2)).copy()


@dataclass(frozen=True)
class DofMap:
    """Global numbering and Dirichlet data for the Taylor-Hood pair.

    Attributes:
        mesh: the underlying triangulation.
        node_coords: (ns, 2) coordinates of scalar velocity nodes.
        tri_vnodes: (nt, 6) scalar-node indices per triangle in local
            order (v0, v1, v2, m01, m12, m20).
        tri_pnodes: (nt, 3) pressure (vertex) indices per triangle.
        node_on_boundary: (ns,) bool per scalar node.
        dirichlet_mask: (2*ns,) bool per velocity dof, component-blocked.
        free_velocity: indices of unconstrained velocity dofs.
    """

    mesh: Mesh
    node_coords: np.ndarray
    tri_vnodes: np.ndarray
    tri_pnodes: np.ndarray
    node_on_boundary: np.ndarray
    dirichlet_mask: np.ndarray
    free_velocity: np.ndarray

    @property
    def num_scalar_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def num_velocity_dofs(self) -> int:
        return 2 * self.num_scalar_nodes

    @property
    def num_pressure_dofs(self) -> int:
        return self.mesh.num_vertices


def build_dofmap(mesh: Mesh) -> DofMap:
    """Number the velocity and pressure dofs for a mesh."""
    nv = mesh.num_vertices
    node_coords = np.vstack([mesh.vertices, mesh.edge_midpoints])
    tri_vnodes = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
    node_on_boundary = np.concatenate([mesh.boundary_vertex, mesh.boundary_edge])
    dirichlet_mask = np.tile(node_on_boundary, 2)
    free_velocity = np.flatnonzero(~dirichlet_mask)
    for a in (node_coords, tri_vnodes, node_on_boundary, dirichlet_mask, free_velocity):
        a.flags.writeable = False
    return DofMap(
        mesh=mesh,
        node_coords=node_coords,
        tri_vnodes=tri_vnodes,
        tri_pnodes=mesh.triangles,
        node_on_boundary=node_on_boundary,
        dirichlet_mask=dirichlet_mask,
        free_velocity=free_velocity,
    )


def interpolate_velocity(dofmap: DofMap, f) -> np.ndarray:
    """Nodal interpolation of a vector function f(x, y) -> (u1, u2).

    Exact for componentwise quadratics. No Dirichlet masking is applied;
    callers that need homogeneous boundary values should zero the masked
    entries.
    """
    xy = dofmap.node_coords
    u1, u2 = f(xy[:, 0], xy[:, 1])
    u1 = np.broadcast_to(np.asarray(u1, dtype=float), (dofmap.num_scalar_nodes,))
    u2 = np.broadcast_to(np.asarray(u2, dtype=float), (dofmap.num_scalar_nodes,))
    return np.concatenate([u1, u2])


def interpolate_pressure(dofmap: DofMap, f) -> np.ndarray:
    """Vertex interpolation of a scalar function; exact for linears."""
    xy = dofmap.mesh.vertices
    vals = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
    return np.broadcast_to(vals, (dofmap.num_pressure_dofs,)).copy()


def evaluate_velocity(coeffs: np.ndarray, dofmap: DofMap, x) -> np.ndarray:
    """Evaluate a velocity coefficient vector at one point."""
    t, bary = locate_point(dofmap.mesh, x)
    vals, _ = p2_basis(bary)
    nodes = dofmap.tri_vnodes[t]
    ns = dofmap.num_scalar_nodes
    return np.array([coeffs[nodes] @ vals, coeffs[ns + nodes] @ vals])


def evaluate_pressure(coeffs: np.ndarray, dofmap: DofMap, x) -> float:
    """Evaluate a pressure coefficient vector at one point."""
    t, bary = locate_point(dofmap.mesh, x)
    vals, _ = p1_basis(bary)
    return float(coeffs[dofmap.tri_pnodes[t]] @ vals)
