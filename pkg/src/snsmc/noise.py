"""Seeded, refinement-consistent truncated Wiener increments.

A path stores standard normal draws xi[n, j1-1, j2-1] on the finest time
grid only. The scaled fine increment of mode (j1, j2) over fine step n is

    sqrt(k0) * sqrt(lambda_{j1,j2}) * xi[n, j1-1, j2-1],

with lambda_{j1,j2} = 1/(j1+j2)^2. Increments for a coarser step k = r*k0
are always the sum of the r scaled fine increments, accumulated in fine-
index ascending order, so a coarse-step run and the fine reference run
see bitwise the same Brownian path. Streams are keyed by
(master_seed, path_index); distinct path indices give independent,
reproducible substreams without any shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snsmc.assembly import AssembledForms


def mode_weight(j1: int, j2: int) -> float:
    """Spectral variance weight lambda = 1/(j1+j2)^2."""
    if j1 < 1 or j2 < 1:
        raise ValueError("mode indices start at 1")
    return 1.0 / (j1 + j2) ** 2


@dataclass(frozen=True)
class WienerPath:
    """One realization of the truncated noise on the fine grid.

    Attributes:
        master_seed, path_index: the RNG substream key.
        k0: fine step size, M0 * k0 = T.
        M0: number of fine steps.
        J: mode cutoff per direction (J*J modes).
        xi: (M0, J, J) standard normal draws.
        scaled: (M0, J, J) fine increments sqrt(k0 * lambda) * xi.
    """

    master_seed: int
    path_index: int
    k0: float
    M0: int
    J: int
    xi: np.ndarray
    scaled: np.ndarray


def generate_path(master_seed: int, path_index: int, M0: int, J: int,
                  T: float = 1.0) -> WienerPath:
    """Draw the fine-grid increments for one sample path.

    Deterministic in all arguments; paths with distinct path_index are
    statistically independent.
    """
    if M0 < 1 or J < 1:
        raise ValueError("M0 and J must be >= 1")
    rng = np.random.default_rng([int(master_seed), int(path_index)])
    xi = rng.standard_normal((M0, J, J))
    k0 = T / M0
    j = np.arange(1, J + 1)
    lam = 1.0 / (j[:, None] + j[None, :]) ** 2
    scaled = np.sqrt(k0) * np.sqrt(lam)[None, :, :] * xi
    xi.flags.writeable = False
    scaled.flags.writeable = False
    return WienerPath(
        master_seed=int(master_seed),
        path_index=int(path_index),
        k0=k0,
        M0=M0,
        J=J,
        xi=xi,
        scaled=scaled,
    )


def coarse_mode_increment(path: WienerPath, coarse_step_index: int,
                          refinement_ratio: int) -> np.ndarray:
    """Mode increments over coarse step [n*r*k0, (n+1)*r*k0), shape (J, J).

    Exactly the sum of the r scaled fine increments, accumulated in
    fine-index ascending order; r = 1 returns the fine increment itself.
    """
    r = int(refinement_ratio)
    n = int(coarse_step_index)
    if r < 1 or path.M0 % r != 0:
        raise ValueError(f"refinement ratio {r} does not divide M0={path.M0}")
    if not 0 <= n < path.M0 // r:
        raise IndexError(f"coarse step {n} out of range for r={r}")
    out = path.scaled[n * r].copy()
    for i in range(1, r):
        out += path.scaled[n * r + i]
    return out


def stochastic_load(forms: AssembledForms, increment: np.ndarray,
                    g_scale: float) -> np.ndarray:
    """Velocity load (g dW, phi_i) for one step's mode increments."""
    increment = np.asarray(increment)
    J = increment.shape[0]
    loads = forms.assemble_noise_loads(J)
    if increment.shape != loads.shape[:2]:
        raise ValueError(
            f"increment shape {increment.shape} does not match J={J} loads"
        )
    return g_scale * np.einsum("jk,jki->i", increment, loads)


def dump_path(path: WienerPath, file) -> None:
    """Write a path as text: a header line then row-major xi values."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "w", encoding="utf-8")
        close = True
    try:
        file.write(
            f"# master_seed={path.master_seed} path_index={path.path_index} "
            f"M0={path.M0} J={path.J}\n"
        )
        for v in path.xi.ravel():
            file.write(f"{float(v)!r}\n")
    finally:
        if close:
            file.close()
