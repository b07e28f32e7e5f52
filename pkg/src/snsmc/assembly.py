"""Sparse operators and load vectors for the mixed discretization.

Assembles the velocity mass and stiffness operators, the pressure mass
operator, the divergence coupling, quadrature-exact evaluation of the
skew-symmetrized convection form

    btilde(a, b, c) = (a . grad b, c) + 1/2 ([div a] b, c),

the spectral noise-mode load vectors, and the time-dependent body-force
load used by the experiments.

All integrals use the degree-5 triangle rule, which integrates every
bilinear form here and the convection form exactly on affine elements;
the skew symmetry btilde(a, v, v) = 0 therefore holds to roundoff for
velocity fields vanishing on the boundary.

Assembly is serial and vectorized over triangles; results are bitwise
reproducible run to run.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from snsmc.fem import (
    TRIANGLE_QUADRATURE,
    DofMap,
    p1_basis,
    p2_basis,
)
from snsmc.mesh import Mesh


def body_force(t: float, x, y):
    """Time-dependent body force of the stochastic flow experiments.

    Returns the pair (f1, f2) evaluated elementwise on x, y.
    """
    pi = np.pi
    st, ct = np.sin(t), np.cos(t)
    sx, sy = np.sin(pi * x), np.sin(pi * y)
    s2x, s2y = np.sin(2 * pi * x), np.sin(2 * pi * y)
    c2x, c2y = np.cos(2 * pi * x), np.cos(2 * pi * y)
    f1 = (
        pi * ct * s2y * sx * sx
        - 2 * pi**3 * st * s2y * (2 * c2x - 1)
        - pi * st * sx * sy
    )
    f2 = (
        -pi * ct * s2x * sy * sy
        - 2 * pi**3 * st * s2x * (1 - 2 * c2y)
        + pi * st * np.cos(pi * x) * np.cos(pi * y)
    )
    return f1, f2


def noise_mode(j1: int, j2: int, x, y):
    """Scalar spatial profile sin(j1 pi x) sin(j2 pi y) shared by both
    components of the vector noise mode."""
    return np.sin(j1 * np.pi * x) * np.sin(j2 * np.pi * y)


class AssembledForms:
    """Discrete operators on a fixed mesh/dofmap pair.

    Attributes:
        M: velocity mass operator, (2*ns, 2*ns) CSR.
        K: velocity stiffness (componentwise Laplacian), CSR.
        B: divergence coupling, (np_, 2*ns) CSR with entries
            (div phi_j, q_i).
        Mp: pressure mass operator, (np_, np_) CSR.
        mean_vector: entries (1, q_i), used for the zero-mean constraint.

    Instances are immutable apart from an internal cache of noise-mode
    loads keyed by the mode cutoff.
    """

    def __init__(self, mesh: Mesh, dofmap: DofMap):
        self.mesh = mesh
        self.dofmap = dofmap
        self.quad = TRIANGLE_QUADRATURE

        verts = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
        e1 = verts[:, 1] - verts[:, 0]
        e2 = verts[:, 2] - verts[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        inv_t = np.empty((len(det), 2, 2))
        inv_t[:, 0, 0] = e2[:, 1] / det
        inv_t[:, 0, 1] = -e2[:, 0] / det
        inv_t[:, 1, 0] = -e1[:, 1] / det
        inv_t[:, 1, 1] = e1[:, 0] / det
        # inv_t[t] = J^{-1}; physical gradient = J^{-T} reference gradient.

        qp, qw = self.quad.points, self.quad.weights
        self._val2, gref2 = p2_basis(qp)               # (nq,6), (nq,6,2)
        self._val1, _ = p1_basis(qp)                   # (nq,3)
        self._gphys = np.einsum("tji,qlj->tqli", inv_t, gref2)
        self._wdet = np.abs(det)[:, None] * qw[None, :]
        self._quad_xy = np.einsum("qk,tkd->tqd", qp, verts)
        # Flat layouts for the convection hot path: values (6, nq),
        # reference gradients (6, nq*2), inverse Jacobians (nt, 2, 2).
        self._val2_t = np.ascontiguousarray(self._val2.T)
        self._gref2_flat = np.ascontiguousarray(
            gref2.transpose(1, 0, 2).reshape(6, -1)
        )
        self._jinv = inv_t

        ns = dofmap.num_scalar_nodes
        np_ = dofmap.num_pressure_dofs
        tv, tp = dofmap.tri_vnodes, dofmap.tri_pnodes

        me = np.einsum("tq,qa,qb->tab", self._wdet, self._val2, self._val2)
        ke = np.einsum("tq,tqad,tqbd->tab", self._wdet, self._gphys, self._gphys)
        mpe = np.einsum("tq,qa,qb->tab", self._wdet, self._val1, self._val1)

        Ms = _scatter_matrix(me, tv, tv, (ns, ns))
        Ks = _scatter_matrix(ke, tv, tv, (ns, ns))
        self.Mp = _scatter_matrix(mpe, tp, tp, (np_, np_))
        self.M = sp.kron(sp.eye(2), Ms, format="csr")
        self.K = sp.kron(sp.eye(2), Ks, format="csr")

        bex = np.einsum("tq,qa,tqb->tab", self._wdet, self._val1,
                        self._gphys[:, :, :, 0])
        bey = np.einsum("tq,qa,tqb->tab", self._wdet, self._val1,
                        self._gphys[:, :, :, 1])
        Bx = _scatter_matrix(bex, tp, tv, (np_, ns))
        By = _scatter_matrix(bey, tp, tv, (np_, ns))
        self.B = sp.hstack([Bx, By], format="csr")

        self.mean_vector = np.asarray(self.Mp @ np.ones(np_))
        self.mean_vector.flags.writeable = False
        self._noise_loads: dict[int, np.ndarray] = {}
        self._body_loads: dict[float, np.ndarray] = {}

    # -- scattered load helpers -------------------------------------------

    def _scalar_load(self, values_at_quad: np.ndarray) -> np.ndarray:
        """Assemble (g, psi_i) for scalar nodal tests from pointwise g."""
        elem = np.einsum("tq,ql->tl", self._wdet * values_at_quad, self._val2)
        return np.bincount(
            self.dofmap.tri_vnodes.ravel(),
            weights=elem.ravel(),
            minlength=self.dofmap.num_scalar_nodes,
        )

    def velocity_load(self, f, t: float | None = None) -> np.ndarray:
        """Quadrature load (f, phi_i) for a vector function f(x, y) or
        f(t, x, y) when a time is given."""
        x, y = self._quad_xy[:, :, 0], self._quad_xy[:, :, 1]
        f1, f2 = f(x, y) if t is None else f(t, x, y)
        f1 = np.broadcast_to(np.asarray(f1, dtype=float), x.shape)
        f2 = np.broadcast_to(np.asarray(f2, dtype=float), x.shape)
        return np.concatenate([self._scalar_load(f1), self._scalar_load(f2)])

    def assemble_body_force(self, t: float) -> np.ndarray:
        """Load vector (f(t), phi_i) of the experiment body force."""
        return self.velocity_load(body_force, t=t)

    def assemble_body_force_cached(self, t: float) -> np.ndarray:
        """Cached body-force load; step times recur across sample paths,
        so each distinct t is quadratured once per forms instance."""
        load = self._body_loads.get(t)
        if load is None:
            load = self.assemble_body_force(t)
            load.flags.writeable = False
            self._body_loads[t] = load
        return load

    def assemble_noise_loads(self, J: int) -> np.ndarray:
        """Per-mode loads (e_{j1,j2}, phi_i), shape (J, J, 2*ns).

        Computed once per cutoff and cached; entry [j1-1, j2-1] holds the
        load of mode (j1, j2). Both velocity components of a mode share
        the same scalar profile, so the x and y blocks coincide.
        """
        if J < 1:
            raise ValueError(f"mode cutoff must be >= 1, got {J}")
        cached = self._noise_loads.get(J)
        if cached is not None:
            return cached
        x, y = self._quad_xy[:, :, 0], self._quad_xy[:, :, 1]
        loads = np.empty((J, J, self.dofmap.num_velocity_dofs))
        for j1 in range(1, J + 1):
            for j2 in range(1, J + 1):
                ls = self._scalar_load(noise_mode(j1, j2, x, y))
                loads[j1 - 1, j2 - 1] = np.concatenate([ls, ls])
        loads.flags.writeable = False
        self._noise_loads[J] = loads
        return loads

    # -- convection form ---------------------------------------------------

    def _local_coeffs(self, u: np.ndarray) -> np.ndarray:
        """Gather velocity coefficients per triangle, shape (nt, 2, 6)."""
        comps = u.reshape(2, self.dofmap.num_scalar_nodes)
        return np.ascontiguousarray(comps[:, self.dofmap.tri_vnodes].transpose(1, 0, 2))

    def _values_and_grads(self, loc: np.ndarray):
        """Field values (nt, 2, nq) and gradients (nt, 2, nq, 2) at
        quadrature points from local coefficients (nt, 2, 6).

        Contracts against the constant reference tables first (two flat
        matrix products), then applies the per-triangle inverse Jacobian
        elementwise.
        """
        nt = loc.shape[0]
        nq = self._val2_t.shape[1]
        flat = loc.reshape(nt * 2, 6)
        vals = (flat @ self._val2_t).reshape(nt, 2, nq)
        ref = (flat @ self._gref2_flat).reshape(nt, 2, nq, 2)
        jinv = self._jinv[:, None, None, :, :]
        grads = np.empty_like(ref)
        grads[..., 0] = ref[..., 0] * jinv[..., 0, 0] + ref[..., 1] * jinv[..., 1, 0]
        grads[..., 1] = ref[..., 0] * jinv[..., 0, 1] + ref[..., 1] * jinv[..., 1, 1]
        return vals, grads

    def _convection_integrand(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pointwise a . grad b + 1/2 (div a) b, shape (nt, 2, nq)."""
        same = a is b
        aloc = self._local_coeffs(a)
        avals, agrads = self._values_and_grads(aloc)
        if same:
            bvals, bgrads = avals, agrads
        else:
            bvals, bgrads = self._values_and_grads(self._local_coeffs(b))
        conv = (
            bgrads[..., 0] * avals[:, None, 0, :]
            + bgrads[..., 1] * avals[:, None, 1, :]
        )
        div_a = agrads[:, 0, :, 0] + agrads[:, 1, :, 1]
        return conv + (0.5 * div_a)[:, None, :] * bvals

    def trilinear_btilde(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
        """Value of btilde(a, b, c) by elementwise quadrature."""
        cvals, _ = self._values_and_grads(self._local_coeffs(c))
        integ = self._convection_integrand(a, b)
        return float(np.sum(self._wdet[:, None, :] * integ * cvals))

    def trilinear_rhs(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Load vector with entries btilde(a, b, phi_i)."""
        integ = self._convection_integrand(a, b)
        weighted = integ * self._wdet[:, None, :]
        nt = weighted.shape[0]
        elem = (weighted.reshape(nt * 2, -1) @ self._val2).reshape(nt, 2, 6)
        tv = self.dofmap.tri_vnodes.ravel()
        ns = self.dofmap.num_scalar_nodes
        lx = np.bincount(tv, weights=elem[:, 0, :].ravel(), minlength=ns)
        ly = np.bincount(tv, weights=elem[:, 1, :].ravel(), minlength=ns)
        return np.concatenate([lx, ly])

    # -- norms -------------------------------------------------------------

    def velocity_l2(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(u @ (self.M @ u), 0.0)))

    def velocity_h1(self, u: np.ndarray) -> float:
        """Full H1 norm sqrt(L2^2 + seminorm^2)."""
        return float(np.sqrt(max(u @ (self.M @ u) + u @ (self.K @ u), 0.0)))

    def velocity_h1_semi(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(u @ (self.K @ u), 0.0)))

    def pressure_l2(self, p: np.ndarray) -> float:
        return float(np.sqrt(max(p @ (self.Mp @ p), 0.0)))


def _scatter_matrix(elem, rows, cols, shape) -> sp.csr_matrix:
    i = np.repeat(rows, elem.shape[2], axis=1).ravel()
    j = np.tile(cols, (1, elem.shape[1])).ravel()
    mat = sp.coo_matrix((elem.ravel(), (i, j)), shape=shape)
    return mat.tocsr()


def assemble_bilinear_forms(mesh: Mesh, dofmap: DofMap) -> AssembledForms:
    """Assemble all constant-in-time operators for a mesh/dofmap pair."""
    return AssembledForms(mesh, dofmap)
