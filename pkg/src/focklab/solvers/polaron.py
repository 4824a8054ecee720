"""Lattice Pekar-Tomasevich multi-polaron: energy, SCF solver, binding scans.

The functional is the particle-sector energy of -laplacian/2 plus a pair
repulsion of strength ``repulsion``, minus a concave density-density
attraction of strength ``alpha``, all built from a single even positive-type
kernel (soft Coulomb by default).  Critical points solve a nonlinear
eigenvalue problem: the state is the ground state of the linear Hamiltonian
whose external potential is generated by its own density.  The solver
iterates exactly that map with damped density mixing.

Energies and densities are kept in site-count units throughout: the volume
elements attached to densities per unit length cancel against the ones the
quadrature introduces, so no spacing factors appear in the formulas below.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field

import numpy as np

from ..fock import FockBasis, assemble_hamiltonian, enumerate_basis
from ..onebody import (OneBodySpace, as_matrix, kinetic_operator,
                       pair_distance_matrix, soft_coulomb, two_body_kernel)

DENSITY_TOL = 1e-8
SCF_RESIDUAL_TOL = 1e-7
ENERGY_BACKTRACK_TOL = 1e-10
MAX_HALVINGS = 4
MAX_WORKERS = 4


def _worker_count() -> int:
    """Seed-pool width, overridable through FOCKLAB_THREADS."""
    raw = os.environ.get("FOCKLAB_THREADS", "")
    try:
        requested = int(raw)
    except ValueError:
        return MAX_WORKERS
    return max(1, requested)

# Continuum bipolaron threshold quoted in the literature for the 3D Coulomb
# kernel.  Recorded for context only: the lattice kernel used here is
# different, so scans are not expected to land on it.
CONTINUUM_BIPOLARON_THRESHOLD = 0.87


class PekarModel:
    """Immutable lattice setup shared by every solve at fixed repulsion.

    The linear part (kinetic plus repulsion) is assembled once per particle
    sector; each SCF iteration only swaps the diagonal one-body potential,
    which is cheap.  The attraction matrix has k(0) on the diagonal, finite
    because the kernel is softened at the lattice scale.

    The default statistics is bosonic: the functional has no exchange term
    and its unconstrained minimum lies in the symmetric sector, which for two
    particles is the spatial part of a spin singlet.
    """

    def __init__(self, space: OneBodySpace, n_max: int, repulsion: float = 0.0,
                 kernel=None, statistics: str = "boson"):
        if n_max < 1:
            raise ValueError("need at least one particle sector")
        self.space = space
        self.n_max = int(n_max)
        self.repulsion = float(repulsion)
        if kernel is None:
            spacing = space.spacing
            kernel = lambda d: soft_coulomb(d, spacing)
        self.kernel = kernel
        self.attraction = np.asarray(kernel(pair_distance_matrix(space)),
                                     dtype=float)
        if np.max(np.abs(self.attraction - self.attraction.T)) > 1e-12:
            raise ValueError("interaction kernel must be even in the distance")
        self.statistics = statistics
        self.basis = enumerate_basis(space.n_modes, self.n_max, statistics)
        self.kinetic = as_matrix(kinetic_operator(space))
        pair = None
        if self.repulsion != 0.0:
            pair = two_body_kernel(space,
                                   lambda d: self.repulsion * np.asarray(kernel(d)),
                                   statistics)
        self.base = assemble_hamiltonian(self.basis, self.kinetic, pair)
        self._occupations: dict = {}

    def occupation_matrix(self, n_particles: int) -> np.ndarray:
        """Counts tensor O[t, x] = number of particles of basis tuple t on site x."""
        if n_particles not in self._occupations:
            tuples_n = self.basis.tuples(n_particles)
            table = np.zeros((len(tuples_n), self.space.n_modes))
            for row, occ in enumerate(tuples_n):
                for mode in occ:
                    table[row, mode] += 1.0
            self._occupations[n_particles] = table
        return self._occupations[n_particles]

    def infer_sector(self, psi: np.ndarray) -> int:
        matches = [n for n in range(self.basis.N + 1)
                   if self.basis.sector_dims[n] == psi.size]
        if len(matches) != 1:
            raise ValueError(
                f"vector length {psi.size} does not single out a sector; "
                f"pass n_particles explicitly")
        return matches[0]

    def density(self, psi: np.ndarray, n_particles: int) -> np.ndarray:
        """Expected site occupancies of a sector vector; sums to the sector."""
        weights = np.abs(np.asarray(psi, dtype=complex)) ** 2
        return self.occupation_matrix(n_particles).T @ weights

    def sector_hamiltonian(self, n_particles: int, alpha: float = 0.0,
                           density=None) -> np.ndarray:
        """Linear sector Hamiltonian with the density-generated potential."""
        block = np.array(self.base.block(n_particles, n_particles))
        if alpha != 0.0 and density is not None:
            site_potential = -alpha * (self.attraction @ np.asarray(density))
            block[np.diag_indices_from(block)] += \
                self.occupation_matrix(n_particles) @ site_potential
        return block


def attraction_energy(model: PekarModel, density, alpha: float) -> float:
    """The concave density-density term, -alpha/2 <rho, k rho>."""
    density = np.asarray(density, dtype=float)
    return -0.5 * alpha * float(density @ model.attraction @ density)


def pekar_energy(model: PekarModel, psi: np.ndarray, alpha: float,
                 n_particles: int | None = None) -> float:
    """Full nonlinear energy of a normalized sector vector.

    At alpha = 0 this is the plain linear energy; with one particle and no
    second particle to repel it is the lattice Choquard functional.
    """
    psi = np.asarray(psi, dtype=complex)
    if n_particles is None:
        n_particles = model.infer_sector(psi)
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"state must be normalized, got norm {norm:.12g}")
    block = model.base.block(n_particles, n_particles)
    linear = float(np.vdot(psi, block @ psi).real)
    density = model.density(psi, n_particles)
    return linear + attraction_energy(model, density, alpha)


def mixture_concavity_margin(model: PekarModel, psi_a: np.ndarray,
                             psi_b: np.ndarray, alpha: float,
                             weight: float = 0.5) -> float:
    """Density-term energy of a mixture minus the convex combination.

    Nonnegative (up to roundoff) because the density term is concave; this is
    the finite-dimensional shadow of the fact that mixed states cannot lower
    the nonlinear ground energy.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError("mixture weight must lie in [0, 1]")
    n_a = model.density(psi_a, model.infer_sector(psi_a))
    n_b = model.density(psi_b, model.infer_sector(psi_b))
    mixed = weight * n_a + (1.0 - weight) * n_b
    combo = (weight * attraction_energy(model, n_a, alpha)
             + (1.0 - weight) * attraction_energy(model, n_b, alpha))
    return attraction_energy(model, mixed, alpha) - combo


@dataclass(frozen=True)
class PolaronResult:
    """One converged (or flagged) SCF solve at fixed particle number and alpha."""

    n_particles: int
    alpha: float
    repulsion: float
    energy: float
    mu: float
    psi: np.ndarray
    density: np.ndarray
    residual: float
    converged: bool
    iterations: int
    theta: float
    seed_label: str
    energy_trace: list

    def __post_init__(self):
        if np.min(self.density) < -1e-12:
            raise ArithmeticError("negative site occupancy in SCF result")
        if abs(float(np.sum(self.density)) - self.n_particles) > 1e-8:
            raise ArithmeticError("SCF density does not carry the full mass")


def _scf_once(model: PekarModel, n_particles: int, alpha: float,
              start_density: np.ndarray, seed_label: str, theta0: float,
              density_tol: float, max_iter: int) -> PolaronResult:
    counts = np.asarray(start_density, dtype=float)
    theta = theta0
    halvings = 0
    trace: list = []
    accepted_counts = counts
    last_proposal = counts
    converged_density = False
    iterations = 0
    psi = None
    for _ in range(max_iter):
        iterations += 1
        block = model.sector_hamiltonian(n_particles, alpha, counts)
        vals, vecs = np.linalg.eigh(block)
        psi = vecs[:, 0].astype(complex)
        energy = pekar_energy(model, psi, alpha, n_particles)
        if trace and energy > trace[-1] + ENERGY_BACKTRACK_TOL:
            halvings += 1
            if halvings > MAX_HALVINGS:
                break
            theta /= 2.0
            counts = (1.0 - theta) * accepted_counts + theta * last_proposal
            continue
        trace.append(energy)
        accepted_counts = counts
        proposal = model.density(psi, n_particles)
        if float(np.sum(np.abs(proposal - counts))) <= density_tol:
            converged_density = True
            break
        last_proposal = proposal
        counts = (1.0 - theta) * counts + theta * proposal

    # Self-consistency is judged at the state's own density, which is the
    # fixed-point condition itself rather than the last mixing iterate.
    density = model.density(psi, n_particles)
    block = model.sector_hamiltonian(n_particles, alpha, density)
    mu = float(np.vdot(psi, block @ psi).real)
    residual = float(np.linalg.norm(block @ psi - mu * psi))
    energy = pekar_energy(model, psi, alpha, n_particles)
    return PolaronResult(n_particles=n_particles, alpha=alpha,
                         repulsion=model.repulsion, energy=energy, mu=mu,
                         psi=psi, density=density, residual=residual,
                         converged=converged_density and residual <= SCF_RESIDUAL_TOL,
                         iterations=iterations, theta=theta,
                         seed_label=seed_label, energy_trace=trace)


def pekar_minimize(model: PekarModel, n_particles: int, alpha: float,
                   restarts: int = 2, warm_density=None, theta: float = 0.5,
                   density_tol: float = DENSITY_TOL, max_iter: int = 500,
                   seed: int = 2024) -> PolaronResult:
    """Best SCF fixed point over the standard seed set plus random restarts.

    Seeds are a uniform profile, everything on the central site, an optional
    warm-start density (previous grid point of a scan), and ``restarts``
    random profiles from a seeded stream.  Independent seeds run on a small
    thread pool over the shared assembly; the winner is the lowest-energy
    converged run, falling back to the lowest residual if none converged.
    """
    if not 1 <= n_particles <= model.n_max:
        raise ValueError(f"sector {n_particles} outside 1..{model.n_max}")
    r = model.space.n_modes
    uniform = np.full(r, n_particles / r)
    central = np.zeros(r)
    central[r // 2] = float(n_particles)
    seeds = [("uniform", uniform), ("single-site", central)]
    if warm_density is not None:
        seeds.append(("warm", np.asarray(warm_density, dtype=float)))
    rng = np.random.default_rng(seed)
    for k in range(restarts):
        profile = rng.random(r)
        seeds.append((f"random-{k}", n_particles * profile / profile.sum()))

    def run(entry):
        label, start = entry
        return _scf_once(model, n_particles, alpha, start, label, theta,
                         density_tol, max_iter)

    with concurrent.futures.ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        results = list(pool.map(run, seeds))
    converged = [res for res in results if res.converged]
    pool_best = converged if converged else results
    return min(pool_best, key=lambda res: (res.energy, res.seed_label))


@dataclass(frozen=True)
class BindingCurve:
    """Sector energies and binding diagnostics along an ascending alpha grid."""

    alphas: np.ndarray
    sector_energies: dict
    margins: dict
    binding: np.ndarray
    converged: dict
    threshold: float | None
    threshold_bracket: tuple | None
    monotone_ok: bool
    convex_ok: bool
    reference_threshold: float = CONTINUUM_BIPOLARON_THRESHOLD

    def csv(self) -> str:
        lines = ["alpha," + ",".join(f"e{k}" for k in sorted(self.sector_energies))
                 + ",binding,converged"]
        for i, alpha in enumerate(self.alphas):
            energies = ",".join("%.17g" % self.sector_energies[k][i]
                                for k in sorted(self.sector_energies))
            flag = all(self.converged[k][i] for k in self.converged)
            lines.append("%.17g,%s,%.17g,%d" % (alpha, energies,
                                                self.binding[i], int(flag)))
        return "\n".join(lines) + "\n"


def binding_scan(model: PekarModel, alpha_grid, n_particles: int = 2,
                 restarts: int = 2, binding_tol: float = 1e-6,
                 seed: int = 2024, theta: float = 0.5,
                 max_iter: int = 500) -> BindingCurve:
    """March up the alpha grid with warm starts and tabulate binding margins.

    Binding energy (two particles) is B = 2 E(1) - E(2); the threshold is the
    interpolated zero crossing before the first grid point where B exceeds
    ``binding_tol``.  Monotonicity and discrete convexity of B are checked
    within solver tolerance.  Non-converged points are flagged, never hidden.
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if alphas.ndim != 1 or alphas.size < 2:
        raise ValueError("need a one-dimensional grid of at least two alphas")
    if np.any(np.diff(alphas) <= 0):
        raise ValueError("alpha grid must be strictly ascending")
    if n_particles > model.n_max:
        raise ValueError("scan sector exceeds the model's particle cap")

    energies = {k: [] for k in range(1, n_particles + 1)}
    flags = {k: [] for k in range(1, n_particles + 1)}
    warm = {k: None for k in range(1, n_particles + 1)}
    for alpha in alphas:
        for k in range(1, n_particles + 1):
            res = pekar_minimize(model, k, float(alpha), restarts=restarts,
                                 warm_density=warm[k], theta=theta,
                                 max_iter=max_iter, seed=seed)
            energies[k].append(res.energy)
            flags[k].append(res.converged)
            warm[k] = res.density

    margins = {}
    for i, alpha in enumerate(alphas):
        for n in range(2, n_particles + 1):
            for k in range(1, n):
                margins[(float(alpha), n, k)] = (energies[n][i]
                                                 - energies[n - k][i]
                                                 - energies[k][i])

    if n_particles >= 2:
        binding = 2.0 * np.asarray(energies[1]) - np.asarray(energies[2])
    else:
        binding = np.zeros_like(alphas)
    threshold = None
    bracket = None
    above = np.nonzero(binding > binding_tol)[0]
    if above.size:
        j = int(above[0])
        if j == 0:
            threshold = float(alphas[0])
            bracket = (float(alphas[0]), float(alphas[0]))
        else:
            b0, b1 = binding[j - 1], binding[j]
            threshold = float(alphas[j - 1]
                              + (alphas[j] - alphas[j - 1]) * (0.0 - b0) / (b1 - b0))
            bracket = (float(alphas[j - 1]), float(alphas[j]))
    diffs = np.diff(binding)
    monotone_ok = bool(diffs.size == 0 or float(np.min(diffs)) >= -1e-6)
    convex_ok = bool(diffs.size < 2 or float(np.min(np.diff(diffs))) >= -1e-6)
    return BindingCurve(alphas=alphas,
                        sector_energies={k: np.asarray(v)
                                         for k, v in energies.items()},
                        margins=margins,
                        binding=np.asarray(binding),
                        converged=flags, threshold=threshold,
                        threshold_bracket=bracket, monotone_ok=monotone_ok,
                        convex_ok=convex_ok)
