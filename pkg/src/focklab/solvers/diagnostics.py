"""Kinetic-energy diagnostics comparing a state against its density profile."""

from __future__ import annotations

import numpy as np

from ..onebody import OneBodySpace, forward_differences
from ..states import MixedState, density_matrix

LOG_TOL = -1e-6


def hoffmann_ostenhof_check(state: MixedState, space: OneBodySpace,
                            log=None) -> float:
    """Kinetic energy of the state minus that of the square root of its density.

    Returns tr((-laplacian) G) - sum |grad sqrt(rho)|^2 in lattice units,
    where G is the one-body reduced matrix and rho its diagonal.  The value
    is expected nonnegative: discretely, each bond contributes
    G_xx + G_yy - 2 Re G_xy versus (sqrt(rho_x) - sqrt(rho_y))^2 and the
    off-diagonal of a positive matrix is dominated by the geometric mean of
    its diagonal.  This is a diagnostic, not an assertion; a violation beyond
    -1e-6 is reported through ``log`` (a callable taking one string) and the
    margin is returned regardless.
    """
    if space.n_modes != state.basis.r:
        raise ValueError("state and lattice have different mode counts")
    gamma = density_matrix(state, 1, 1).matrix
    counts = np.clip(np.real(np.diag(gamma)), 0.0, None)
    root = np.sqrt(counts)
    margin = 0.0
    for diff in forward_differences(space):
        margin += float(np.trace(diff @ gamma @ diff.conj().T).real)
        margin -= float(np.linalg.norm(diff @ root) ** 2)
    if margin < LOG_TOL and log is not None:
        log(f"kinetic-density margin {margin:.3e} below {LOG_TOL}")
    return margin
