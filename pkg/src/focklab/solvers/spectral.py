"""Sector ground states and the splitting-energy (binding) tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from ..fock import FockBasis, FockOperator, assemble_hamiltonian
from ..onebody import TwoBodyKernel, as_matrix

DENSE_EIG_CAP = 2000
RESIDUAL_TOL = 1e-8
DEGENERACY_GAP = 1e-10


@dataclass(frozen=True)
class SpectralResult:
    """Lowest eigenpair of one particle sector of a Hamiltonian."""

    sector: int
    energy: float
    ground_vector: np.ndarray
    gap: float
    residual: float
    converged: bool
    degenerate: bool

    def __post_init__(self):
        if self.converged and self.residual > RESIDUAL_TOL:
            raise ArithmeticError(
                f"sector {self.sector}: residual {self.residual:.3e} exceeds "
                f"{RESIDUAL_TOL} despite reported convergence")


def exact_ground_state(hamiltonian: FockOperator, sector: int) -> SpectralResult:
    """Lowest eigenpair of the sector block, dense or Lanczos depending on size.

    Sector 0 is the scalar 0 by convention (the vacuum carries no energy).
    A spectral gap below 1e-10 is flagged as degenerate; eigensolver order
    then decides the representative, deterministically.
    """
    if hamiltonian.sector_structure != "number-conserving":
        raise ValueError("ground-state search needs a number-conserving operator")
    basis = hamiltonian.basis
    if not 0 <= sector <= basis.N:
        raise ValueError(f"sector {sector} outside 0..{basis.N}")
    block = hamiltonian.block(sector, sector)
    dim = block.shape[0]
    if dim == 1:
        value = float(block[0, 0].real)
        return SpectralResult(sector=sector, energy=value,
                              ground_vector=np.ones(1, dtype=complex),
                              gap=np.inf, residual=0.0, converged=True,
                              degenerate=False)
    if dim <= DENSE_EIG_CAP:
        vals, vecs = np.linalg.eigh(block)
        energy = float(vals[0])
        vector = vecs[:, 0].astype(complex)
        gap = float(vals[1] - vals[0])
        converged = True
    else:
        sparse_block = scipy.sparse.csr_matrix(block)
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(sparse_block, k=2, which="SA")
            converged = True
        except scipy.sparse.linalg.ArpackNoConvergence as err:
            vals, vecs = err.eigenvalues, err.eigenvectors
            converged = vals.size > 0
            if not converged:
                raise ArithmeticError(f"sector {sector}: Lanczos found no eigenpair")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        energy = float(vals[0])
        vector = vecs[:, 0].astype(complex)
        gap = float(vals[1] - vals[0]) if vals.size > 1 else np.nan
    residual = float(np.linalg.norm(block @ vector - energy * vector))
    return SpectralResult(sector=sector, energy=energy, ground_vector=vector,
                          gap=gap, residual=residual,
                          converged=converged and residual <= RESIDUAL_TOL,
                          degenerate=bool(gap < DEGENERACY_GAP))


@dataclass(frozen=True)
class HvzTable:
    """Sector energies of the dressed and free Hamiltonians, with margins.

    ``margins[(n, k)]`` is E^V(n) - E^V(n-k) - E^0(k), the energetic cost of
    sending k particles far away: negative means those particles are bound.
    Verdicts carry a finite-size caveat; a finite box has no essential
    spectrum, so the inequality content is all that can be tested.
    """

    dressed: dict
    free: dict
    margins: dict
    verdicts: dict
    interaction_nonnegative: bool
    monotonicity_violation: float
    finite_size_caveat: bool = True

    def energies_csv(self) -> str:
        lines = ["sector,dressed_energy,free_energy"]
        for n in sorted(self.dressed):
            lines.append("%d,%.17g,%.17g" % (n, self.dressed[n], self.free[n]))
        return "\n".join(lines) + "\n"

    def margins_csv(self) -> str:
        lines = ["n,k,margin,verdict"]
        for (n, k) in sorted(self.margins):
            lines.append("%d,%d,%.17g,%s" % (n, k, self.margins[(n, k)],
                                             self.verdicts[(n, k)]))
        return "\n".join(lines) + "\n"


def hvz_table(h, w: TwoBodyKernel | None, basis: FockBasis,
              h_free=None, margin_tol: float = 1e-9) -> HvzTable:
    """All sector ground energies plus the splitting margins and verdicts.

    ``h`` is the dressed one-body operator (kinetic plus external potential)
    and ``h_free`` its potential-free counterpart (defaults to ``h``, which
    is the V = 0 case).  Both are assembled with the same interaction on the
    same basis.  With a nonnegative interaction the dressed energies must be
    nonincreasing in the particle number up to the free one-particle energy,
    which plays the role of the finite-size tolerance.
    """
    h = as_matrix(h)
    h_free = h if h_free is None else as_matrix(h_free)
    dressed_op = assemble_hamiltonian(basis, h, w)
    free_op = assemble_hamiltonian(basis, h_free, w)
    dressed, free = {}, {}
    for n in range(basis.N + 1):
        dressed[n] = exact_ground_state(dressed_op, n).energy
        free[n] = exact_ground_state(free_op, n).energy

    margins, verdicts = {}, {}
    for n in range(1, basis.N + 1):
        for k in range(1, n + 1):
            margin = dressed[n] - (dressed[n - k] + free[k])
            margins[(n, k)] = margin
            if margin < -margin_tol:
                verdicts[(n, k)] = "binding"
            elif margin > margin_tol:
                verdicts[(n, k)] = "no-binding"
            else:
                verdicts[(n, k)] = "inconclusive"

    nonneg = _interaction_nonnegative(w)
    violation = 0.0
    if nonneg:
        for n in range(1, basis.N + 1):
            violation = max(violation, dressed[n] - dressed[n - 1])
    return HvzTable(dressed=dressed, free=free, margins=margins,
                    verdicts=verdicts, interaction_nonnegative=nonneg,
                    monotonicity_violation=violation)


def _interaction_nonnegative(w: TwoBodyKernel | None) -> bool:
    if w is None:
        return True
    values = [w.entry(i, j, i, j).real for (i, j) in w.pairs]
    return bool(min(values, default=0.0) >= -1e-12)
