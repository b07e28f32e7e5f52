"""Direct solver for the per-step linear saddle-point systems.

The Picard iteration moves all convection to the right-hand side, so
every step, inner iteration, and sample path on a mesh shares one
constant system

    [ A   -B^T   0 ] [u]   [r_u]
    [-B    0     m ] [pt] = [ 0 ]
    [ 0   m^T    0 ] [c]   [ 0 ]

over the free (non-Dirichlet) velocity dofs, where A = am*M + ak*K,
pt is the pressure scaled by the coupling factor (k for time stepping,
1 for stationary problems), m is the pressure-mean vector, and c a
Lagrange multiplier enforcing (p, 1) = 0 while keeping the matrix
symmetric. The system is factored once (sparse LU) and reused.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from snsmc.assembly import AssembledForms
from snsmc.errors import ConfigurationError, SolverError


class SaddleSystem:
    """Factored saddle-point operator with zero-mean pressure."""

    def __init__(self, forms: AssembledForms, alpha_mass: float,
                 alpha_stiff: float, pressure_scale: float,
                 tau_lin: float = 1e-10, verify: bool = False):
        if pressure_scale <= 0:
            raise ConfigurationError("pressure coupling scale must be positive")
        self.forms = forms
        self.tau_lin = tau_lin
        self.pressure_scale = pressure_scale
        self.verify = verify
        dofmap = forms.dofmap
        free = dofmap.free_velocity
        self.free = free
        self.n_free = len(free)
        self.n_pressure = dofmap.num_pressure_dofs

        A = (alpha_mass * forms.M + alpha_stiff * forms.K).tocsr()
        self.A_free = A[free][:, free].tocsr()
        self.B_free = forms.B[:, free].tocsr()
        m = forms.mean_vector
        mcol = sp.csr_matrix(m.reshape(-1, 1))
        system = sp.bmat(
            [
                [self.A_free, -self.B_free.T, None],
                [-self.B_free, None, mcol],
                [None, mcol.T, None],
            ],
            format="csc",
        )
        try:
            # Symmetric-mode ordering keeps the factors of this symmetric
            # indefinite matrix much sparser than the unsymmetric default;
            # threshold pivoting still guards the zero pressure block.
            self._lu = spla.splu(
                system,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.001,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # singular factorization
            raise ConfigurationError(
                f"saddle system factorization failed: {exc}"
            ) from exc
        self._system = system

    def solve(self, r_u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve for one load vector over all velocity dofs.

        Returns the full velocity coefficient vector (Dirichlet dofs
        zero) and the zero-mean pressure coefficients.
        """
        rhs = np.zeros(self.n_free + self.n_pressure + 1)
        rhs[: self.n_free] = r_u[self.free]
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolverError("saddle solve produced non-finite values")
        u = np.zeros(self.forms.dofmap.num_velocity_dofs)
        u[self.free] = sol[: self.n_free]
        p = sol[self.n_free : self.n_free + self.n_pressure] / self.pressure_scale
        if self.verify:
            res = self.residuals(r_u, u, p)
            scale = float(np.linalg.norm(sol[: self.n_free])) + 1.0
            if (res["momentum_rel"] > self.tau_lin
                    or res["divergence_inf"] > self.tau_lin * scale
                    or res["pressure_mean"] > self.tau_lin):
                raise SolverError(f"solve residuals exceed tau_lin: {res}")
        return u, p

    def residuals(self, r_u: np.ndarray, u: np.ndarray, p: np.ndarray) -> dict:
        """Verify the solve contract for a given load/solution pair."""
        uf = u[self.free]
        pt = p * self.pressure_scale
        mom = self.A_free @ uf - self.B_free.T @ pt - r_u[self.free]
        rnorm = np.linalg.norm(r_u[self.free])
        div = self.B_free @ uf
        return {
            "momentum_rel": float(np.linalg.norm(mom) / max(rnorm, 1e-300)),
            "divergence_inf": float(np.max(np.abs(div), initial=0.0)),
            "pressure_mean": float(abs(self.forms.mean_vector @ p)),
        }


def build_system(forms: AssembledForms, nu: float, k: float,
                 tau_lin: float = 1e-10, verify: bool = False) -> SaddleSystem:
    """System of one implicit time step: A = M + nu*k*K, coupling k."""
    if nu <= 0 or k <= 0:
        raise ConfigurationError("viscosity and time step must be positive")
    return SaddleSystem(forms, alpha_mass=1.0, alpha_stiff=nu * k,
                        pressure_scale=k, tau_lin=tau_lin, verify=verify)


def build_stokes_system(forms: AssembledForms, nu: float,
                        tau_lin: float = 1e-10, verify: bool = False) -> SaddleSystem:
    """Stationary Stokes system: A = nu*K, unit pressure coupling."""
    if nu <= 0:
        raise ConfigurationError("viscosity must be positive")
    return SaddleSystem(forms, alpha_mass=0.0, alpha_stiff=nu,
                        pressure_scale=1.0, tau_lin=tau_lin, verify=verify)


def inf_sup_constant(forms: AssembledForms) -> float:
    """Discrete inf-sup constant of the mixed pair.

    Returns beta_h, the square root of the smallest nonzero eigenvalue
    of Mp^{-1} (B K_ff^{-1} B^T) restricted to mean-zero pressures,
    where K_ff is the velocity stiffness on free dofs. Dense eigensolve;
    intended for small meshes (n <= 16).
    """
    import scipy.linalg as la

    free = forms.dofmap.free_velocity
    K_ff = forms.K[free][:, free].tocsc()
    B_f = forms.B[:, free].tocsr()
    try:
        lu = spla.splu(K_ff)
    except RuntimeError as exc:
        raise SolverError(f"stiffness factorization failed: {exc}") from exc
    X = lu.solve(np.asarray(B_f.T.todense()))
    S = np.asarray(B_f @ X)
    Mp = np.asarray(forms.Mp.todense())
    try:
        eigs = la.eigh(S, Mp, eigvals_only=True)
    except la.LinAlgError as exc:
        raise SolverError(f"inf-sup eigensolve failed: {exc}") from exc
    # Drop the constant-pressure null direction before taking the minimum.
    cutoff = 1e-10 * max(eigs.max(), 1.0)
    positive = eigs[eigs > cutoff]
    if positive.size == 0:
        raise SolverError("no positive inf-sup eigenvalues found")
    return float(np.sqrt(positive.min()))
