import numpy as np
import pytest

from snsmc.assembly import assemble_bilinear_forms
from snsmc.fem import build_dofmap
from snsmc.mesh import build_uniform_mesh


@pytest.fixture(scope="session")
def setups():
    """Mesh/dofmap/forms triples cached per subdivision count."""
    cache = {}

    def get(n):
        if n not in cache:
            mesh = build_uniform_mesh(n)
            dofmap = build_dofmap(mesh)
            cache[n] = (mesh, dofmap, assemble_bilinear_forms(mesh, dofmap))
        return cache[n]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_velocity(dofmap, rng, boundary_zero=True):
    """Random coefficient field, by default in the Dirichlet space."""
    u = rng.standard_normal(dofmap.num_velocity_dofs)
    if boundary_zero:
        u[dofmap.dirichlet_mask] = 0.0
    return u
