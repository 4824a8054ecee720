"""Variational solvers over low-rank orbital manifolds.

``finite_rank_minimize`` alternates an exact diagonalization inside the span
of the current orbitals with a projected-gradient step on the orthonormal
frames (QR retraction, Armijo backtracking), so the energy is monotone along
each restart.  ``hartree_fock_scf`` is the single-determinant special case
solved by the usual self-consistent field loop with damping.  Both are upper
bounds on the sector ground energy by construction; the random-frame oracle
at the bottom exists to keep them honest in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..fock import FockBasis, assemble_hamiltonian, sector_lift
from ..onebody import TwoBodyKernel, as_matrix

FRAME_TOL = 1e-8
ARMIJO_SLOPE = 1e-4
MIN_STEP = 1e-12
CROSS_CHECK_TOL = 1e-9
CROSS_CHECK_DIM_CAP = 4000


@dataclass(frozen=True)
class FiniteRankResult:
    """Best state found over frames of a fixed orbital rank."""

    n_particles: int
    rank: int
    energy: float
    orbitals: np.ndarray
    coefficients: np.ndarray
    converged: bool
    iterations: int
    restart_energies: list

    def __post_init__(self):
        gram = self.orbitals.conj().T @ self.orbitals
        if np.max(np.abs(gram - np.eye(self.rank))) > FRAME_TOL:
            raise ArithmeticError("result orbitals are not orthonormal")


@dataclass(frozen=True)
class HartreeFockResult:
    """Converged single-determinant ground state of the mean-field loop."""

    n_particles: int
    energy: float
    orbitals: np.ndarray
    gamma: np.ndarray
    converged: bool
    iterations: int
    fock_gap: float
    energy_history: list
    exact_expectation: float

    def __post_init__(self):
        gram = self.orbitals.conj().T @ self.orbitals
        if np.max(np.abs(gram - np.eye(self.n_particles))) > FRAME_TOL:
            raise ArithmeticError("occupied orbitals are not orthonormal")


def _orthonormal_columns(mat: np.ndarray) -> np.ndarray:
    """QR with the sign of R's diagonal fixed, so retraction is deterministic."""
    q, r = np.linalg.qr(np.asarray(mat, dtype=complex))
    signs = np.sign(np.real(np.diag(r)))
    signs[signs == 0] = 1.0
    return q * signs


def _sector_annihilators(basis: FockBasis, n: int) -> list:
    """Per-mode annihilation blocks mapping sector n to sector n - 1."""
    tuples_n = basis.tuples(n)
    dim_lo = basis.sector_dims[n - 1]
    mats = [np.zeros((dim_lo, len(tuples_n)), dtype=complex) for _ in range(basis.r)]
    for col, occ in enumerate(tuples_n):
        if basis.statistics == "fermion":
            for pos, mode in enumerate(occ):
                target = occ[:pos] + occ[pos + 1:]
                mats[mode][basis.local_index(n - 1, target), col] += (-1.0) ** pos
        else:
            for mode in set(occ):
                count = occ.count(mode)
                pos = occ.index(mode)
                target = occ[:pos] + occ[pos + 1:]
                mats[mode][basis.local_index(n - 1, target), col] += math.sqrt(count)
    return mats


def _transition_matrix(annihilators, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """A[x, y] = <a_x phi, a_y psi>, the (1,1) transition table of the pair."""
    lowered_phi = np.column_stack([mat @ phi for mat in annihilators])
    lowered_psi = np.column_stack([mat @ psi for mat in annihilators])
    return lowered_phi.conj().T @ lowered_psi


def finite_rank_minimize(h, w: TwoBodyKernel | None, basis: FockBasis,
                         n_particles: int, rank: int, restarts: int = 8,
                         seed: int = 2024, init_frames=None,
                         max_outer: int = 200, tol: float = 1e-11) -> FiniteRankResult:
    """Minimize the sector energy over states built from ``rank`` orbitals.

    Each restart runs the alternating scheme to stagnation; the inner step is
    exact (diagonalization of the Hamiltonian compressed by the lifted frame),
    the outer step moves the frame downhill.  Restart 0 fills the lowest
    eigenvectors of the one-body part; the rest draw from a seeded stream.
    ``init_frames`` are tried first, before the deterministic seeds.
    """
    h = as_matrix(h)
    r = basis.r
    if not 1 <= n_particles <= basis.N:
        raise ValueError(f"particle number {n_particles} outside 1..{basis.N}")
    if rank < 1 or rank > r:
        raise ValueError(f"rank {rank} outside 1..{r}")
    if basis.statistics == "fermion" and rank < n_particles:
        raise ValueError(f"{n_particles} fermions need at least {n_particles} orbitals")

    block = assemble_hamiltonian(basis, h, w).block(n_particles, n_particles)
    tuples_out = basis.tuples(n_particles)
    annihilators = _sector_annihilators(basis, n_particles)

    def inner(frame):
        lift = sector_lift(frame, n_particles, basis.statistics,
                           tuples_out=tuples_out)
        small = lift.conj().T @ block @ lift
        vals, vecs = np.linalg.eigh(small)
        return float(vals[0]), vecs[:, 0], lift

    rng = np.random.default_rng(seed)
    starts = [np.asarray(f, dtype=complex) for f in (init_frames or [])]
    aufbau = np.linalg.eigh(h)[1][:, :rank]
    starts.append(aufbau)
    while len(starts) < len(init_frames or []) + max(1, restarts):
        starts.append(rng.standard_normal((r, rank))
                      + 1j * rng.standard_normal((r, rank)))

    best = None
    restart_energies = []
    for start in starts:
        frame = _orthonormal_columns(start)
        energy, coeff, lift = inner(frame)
        iterations = 0
        converged = False
        for _ in range(max_outer):
            iterations += 1
            psi = lift @ coeff
            transition = _transition_matrix(annihilators, block @ psi, psi)
            euclidean = np.conj(transition) @ frame
            mixer = frame.conj().T @ euclidean
            tangent = euclidean - frame @ (mixer + mixer.conj().T) / 2.0
            slope = float(np.linalg.norm(tangent)) ** 2
            if slope < tol:
                converged = True
                break
            step = 1.0
            moved = False
            while step >= MIN_STEP:
                trial = _orthonormal_columns(frame - step * tangent)
                trial_energy, trial_coeff, trial_lift = inner(trial)
                if trial_energy <= energy - ARMIJO_SLOPE * step * slope:
                    frame, coeff, lift = trial, trial_coeff, trial_lift
                    decrease = energy - trial_energy
                    energy = trial_energy
                    moved = True
                    break
                step /= 2.0
            if not moved:
                converged = True
                break
            if decrease < tol:
                converged = True
                break
        restart_energies.append(energy)
        if best is None or energy < best[0] - 1e-14:
            best = (energy, frame, coeff, converged, iterations)

    energy, frame, coeff, converged, iterations = best
    return FiniteRankResult(n_particles=n_particles, rank=rank, energy=energy,
                            orbitals=frame, coefficients=coeff,
                            converged=converged, iterations=iterations,
                            restart_energies=restart_energies)


def _pair_table(w: TwoBodyKernel | None, r: int) -> np.ndarray:
    if w is None:
        return np.zeros((r, r))
    if w.site_pair_values is None:
        raise ValueError("mean-field solvers need a multiplication pair kernel")
    return np.asarray(w.site_pair_values, dtype=float)


def slater_energy(h, w: TwoBodyKernel | None, frame: np.ndarray) -> float:
    """Energy of the determinant built on orthonormal columns of ``frame``.

    Direct minus exchange; the equal-site contribution cancels between the
    two, so self-interaction never enters.
    """
    h = as_matrix(h)
    frame = np.asarray(frame, dtype=complex)
    gram = frame.conj().T @ frame
    if np.max(np.abs(gram - np.eye(frame.shape[1]))) > FRAME_TOL:
        raise ValueError("determinant orbitals must be orthonormal")
    gamma = frame @ frame.conj().T
    one_body = float(np.trace(h @ gamma).real)
    if w is None:
        return one_body
    if w.statistics != "fermion":
        raise ValueError("Slater determinants are fermionic")
    table = _pair_table(w, frame.shape[0])
    rho = np.real(np.diag(gamma))
    direct = float(rho @ table @ rho)
    exchange = float(np.sum(table * np.abs(gamma) ** 2))
    return one_body + 0.5 * (direct - exchange)


def _fock_matrix(h: np.ndarray, table: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    rho = np.real(np.diag(gamma))
    return h + np.diag(table @ rho) - table * gamma


def hartree_fock_scf(h, w: TwoBodyKernel | None, basis: FockBasis,
                     n_particles: int, tol: float = 1e-10,
                     max_iter: int = 500) -> HartreeFockResult:
    """Self-consistent single-determinant ground state, Aufbau filling.

    The loop damps the density matrix once the energy oscillates.  On exit
    the mean-field energy is cross-checked against the expectation of the
    assembled sector Hamiltonian in the resulting determinant, so the value
    reported really is the many-body functional at that state.
    """
    if basis.statistics != "fermion":
        raise ValueError("Hartree-Fock needs a fermionic basis")
    if not 1 <= n_particles <= min(basis.N, basis.r):
        raise ValueError(f"cannot fill {n_particles} orbitals on this basis")
    h = as_matrix(h)
    table = _pair_table(w, basis.r)

    def occupy(fock):
        vals, vecs = np.linalg.eigh(fock)
        frame = vecs[:, :n_particles]
        gap = float(vals[n_particles] - vals[n_particles - 1]) \
            if n_particles < basis.r else np.inf
        return frame, gap

    frame, gap = occupy(h)
    gamma = frame @ frame.conj().T
    energy = slater_energy(h, w, frame)
    history = [energy]
    damping = 1.0
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        new_frame, gap = occupy(_fock_matrix(h, table, gamma))
        new_energy = slater_energy(h, w, new_frame)
        if new_energy > history[-1] + 1e-12 and damping == 1.0:
            damping = 0.5
        new_gamma = new_frame @ new_frame.conj().T
        mixed = (1.0 - damping) * gamma + damping * new_gamma
        drift = float(np.max(np.abs(mixed - gamma)))
        gamma = mixed
        frame, energy = new_frame, new_energy
        history.append(energy)
        if drift <= tol:
            converged = True
            break

    expectation = energy
    if basis.sector_dims[n_particles] <= CROSS_CHECK_DIM_CAP:
        block = assemble_hamiltonian(basis, h, w).block(n_particles, n_particles)
        vector = sector_lift(frame, n_particles, "fermion",
                             tuples_out=basis.tuples(n_particles))[:, 0]
        expectation = float(np.vdot(vector, block @ vector).real)
        if abs(expectation - energy) > CROSS_CHECK_TOL * max(1.0, abs(energy)):
            raise ArithmeticError(
                f"mean-field energy {energy:.12g} disagrees with the many-body "
                f"expectation {expectation:.12g}")
    return HartreeFockResult(n_particles=n_particles, energy=energy,
                             orbitals=frame, gamma=frame @ frame.conj().T,
                             converged=converged, iterations=iterations,
                             fock_gap=gap, energy_history=history,
                             exact_expectation=expectation)


@dataclass(frozen=True)
class SlaterOracleResult:
    energy: float
    frame: np.ndarray
    samples: int


def random_slater_oracle(h, w: TwoBodyKernel | None, n_particles: int,
                         samples: int = 10_000, seed: int = 7) -> SlaterOracleResult:
    """Brute-force floor estimate: best determinant among random frames.

    Haar-ish frames from QR of complex Gaussians.  Slow and dumb on purpose;
    a solver that cannot beat this within tolerance is broken.
    """
    h = as_matrix(h)
    r = h.shape[0]
    if not 1 <= n_particles <= r:
        raise ValueError(f"cannot place {n_particles} fermions in {r} modes")
    rng = np.random.default_rng(seed)
    best_energy, best_frame = np.inf, None
    for _ in range(samples):
        frame = _orthonormal_columns(rng.standard_normal((r, n_particles))
                                     + 1j * rng.standard_normal((r, n_particles)))
        energy = slater_energy(h, w, frame)
        if energy < best_energy:
            best_energy, best_frame = energy, frame
    return SlaterOracleResult(energy=float(best_energy), frame=best_frame,
                              samples=samples)
