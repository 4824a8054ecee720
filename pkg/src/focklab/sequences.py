"""Families of states, their declared limits, and convergence diagnostics.

The convergence notion here is deliberately modest: pairings of reduced
density matrices against a fixed family of compactly supported test vectors,
tabulated along the sequence and fitted for a trend.  A finite lattice
cannot distinguish weak-* topologies, so nothing stronger is asserted.
Escape to infinity is modeled by translation inside a wide box, with the
step count capped at half the box to keep translates clear of the boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fock import FockBasis, enumerate_basis, sector_lift, wedge
from .onebody import OneBodySpace, kinetic_operator, pair_distance_matrix
from .states import MixedState, average_particle_number, density_matrix_table, pure_state

ORTHOGONALITY_TOL = 1e-8


@dataclass
class StateSequence:
    """A parameterized family n -> state on a fixed basis, with its limit.

    ``generator`` maps a step index to a MixedState (validated on
    construction, so every member is a genuine state).  ``declared_limit``
    is what the family is expected to approach; diagnostics compare against
    it but never assert convergence on their own.
    """

    basis: FockBasis
    generator: object
    declared_limit: MixedState | None = None
    description: str = ""
    step_cap: int | None = None

    def member(self, n: int) -> MixedState:
        if self.step_cap is not None and n > self.step_cap:
            raise ValueError(f"step {n} exceeds the cap {self.step_cap} "
                             "(translates would touch the boundary)")
        return self.generator(n)

    def members(self, steps) -> list:
        return [self.member(n) for n in steps]


# ---------------------------------------------------------------------------
# orbital transport on the lattice
# ---------------------------------------------------------------------------

def translate_orbital(space: OneBodySpace, phi: np.ndarray, steps: int) -> np.ndarray:
    """Shift an orbital by ``steps`` sites along the first axis.

    Periodic boxes roll; Dirichlet boxes shift with zero fill and refuse to
    push any mass over the edge.
    """
    phi = np.asarray(phi, dtype=complex)
    grid = phi.reshape((space.points,) * space.dim)
    if space.boundary == "periodic":
        return np.roll(grid, steps, axis=0).reshape(-1)
    out = np.zeros_like(grid)
    n = space.points
    if steps >= 0:
        lost = grid[n - steps:] if steps else grid[:0]
        if np.linalg.norm(lost) > 1e-12 * max(np.linalg.norm(phi), 1.0):
            raise ValueError(f"translate by {steps} pushes the orbital out of the box")
        out[steps:] = grid[: n - steps]
    else:
        lost = grid[:-steps]
        if np.linalg.norm(lost) > 1e-12 * max(np.linalg.norm(phi), 1.0):
            raise ValueError(f"translate by {steps} pushes the orbital out of the box")
        out[: n + steps] = grid[-steps:]
    return out.reshape(-1)


def translation_operator(space: OneBodySpace, shift) -> np.ndarray:
    """Permutation unitary moving every site by a lattice vector.

    Exact only on the torus; Dirichlet boxes are rejected because shifting
    into a wall is not unitary.
    """
    if space.boundary != "periodic":
        raise ValueError("translations are unitary only with periodic boundary")
    if np.isscalar(shift):
        shift = (int(shift),) + (0,) * (space.dim - 1)
    shift = tuple(int(s) for s in shift)
    if len(shift) != space.dim:
        raise ValueError(f"shift must have {space.dim} components, got {len(shift)}")
    r = space.n_modes
    shape = (space.points,) * space.dim
    src = np.arange(r).reshape(shape)
    index = np.indices(shape)
    moved = [(index[a] + shift[a]) % space.points for a in range(space.dim)]
    dest_grid = np.ravel_multi_index(moved, shape)
    matrix = np.zeros((r, r))
    matrix[dest_grid.reshape(-1), src.reshape(-1)] = 1.0
    return matrix


# ---------------------------------------------------------------------------
# the worked families
# ---------------------------------------------------------------------------

def escaping_product_sequence(space: OneBodySpace, phi: np.ndarray, n: int,
                              statistics: str = "fermion",
                              runner: np.ndarray | None = None) -> MixedState:
    """Two-body state of a fixed orbital paired with an escaping translate.

    The second particle is ``runner`` (the fixed orbital itself when not
    given) translated by n sites, then orthogonalized against the fixed
    orbital, so each member is an exact two-particle state; as n grows the
    pair decouples and only the fixed orbital remains visible locally.
    """
    phi = np.asarray(phi, dtype=complex)
    phi = phi / np.linalg.norm(phi)
    runner = phi if runner is None else np.asarray(runner, dtype=complex)
    runner = runner / np.linalg.norm(runner)
    runner = translate_orbital(space, runner, n)
    runner = runner - np.vdot(phi, runner) * phi
    norm = np.linalg.norm(runner)
    if norm < 1e-12:
        if statistics == "fermion":
            raise ValueError("translate coincides with the orbital: the wedge vanishes")
        runner = phi
    else:
        runner = runner / norm
    basis = enumerate_basis(space.n_modes, 2, statistics)
    pair = wedge(basis, phi, runner, 1, 1)
    pair = pair / np.linalg.norm(pair)
    full = np.zeros(basis.dim, dtype=complex)
    full[basis.sector_slice(2)] = pair
    return pure_state(basis, full)


def escaping_product_family(space: OneBodySpace, phi: np.ndarray,
                            statistics: str = "fermion",
                            runner: np.ndarray | None = None) -> StateSequence:
    """The escaping-pair family with its one-particle declared limit."""
    phi = np.asarray(phi, dtype=complex)
    phi = phi / np.linalg.norm(phi)
    basis = enumerate_basis(space.n_modes, 2, statistics)
    limit = MixedState(basis, {(1, 1): np.outer(phi, phi.conj())})
    return StateSequence(
        basis=basis,
        generator=lambda n: escaping_product_sequence(space, phi, n, statistics,
                                                      runner=runner),
        declared_limit=limit,
        description="fixed orbital paired with an escaping translate",
        step_cap=space.points // 2,
    )


def hartree_sequence(space: OneBodySpace, orbital_family, limit_orbital: np.ndarray,
                     n_particles: int) -> StateSequence:
    """Bosonic product states over a drifting orbital, with binomial limit.

    ``orbital_family(n)`` yields the member orbital (normalized here);
    ``limit_orbital`` is its expected weak limit, whose norm may be below 1.
    The declared limit spreads the surviving mass binomially over sectors.
    """
    basis = enumerate_basis(space.n_modes, n_particles, "boson")
    chi = np.asarray(limit_orbital, dtype=complex)
    survived = float(np.vdot(chi, chi).real)
    if survived > 1.0 + 1e-10:
        raise ValueError("limit orbital has norm above 1")
    blocks = {}
    for k in range(n_particles + 1):
        weight = math.comb(n_particles, k) * (1.0 - min(survived, 1.0)) ** (n_particles - k)
        column = sector_lift(chi[:, None], k, "boson", tuples_out=basis.sectors[k])[:, 0]
        block = weight * np.outer(column, column.conj())
        if np.any(np.abs(block) > 1e-15):
            blocks[(k, k)] = block
    limit = MixedState(basis, blocks)

    def make(n):
        orb = np.asarray(orbital_family(n), dtype=complex)
        orb = orb / np.linalg.norm(orb)
        top = sector_lift(orb[:, None], n_particles, "boson",
                          tuples_out=basis.sectors[n_particles])[:, 0]
        full = np.zeros(basis.dim, dtype=complex)
        full[basis.sector_slice(n_particles)] = top
        return pure_state(basis, full)

    return StateSequence(basis=basis, generator=make, declared_limit=limit,
                         description="product states over a drifting orbital")


def hf_escaping_sequence(space: OneBodySpace, kept: np.ndarray,
                         escaping: np.ndarray) -> StateSequence:
    """Slater determinants whose escaping orbitals translate away.

    The kept columns stay put; the escaping ones move n sites per step.
    The declared limit is the kept-orbital determinant sitting in sector
    n_kept: all weight survives there because kept orbitals keep norm 1.
    """
    r = space.n_modes
    kept = np.asarray(kept, dtype=complex).reshape(r, -1)
    escaping = np.asarray(escaping, dtype=complex).reshape(r, -1)
    n_kept, n_esc = kept.shape[1], escaping.shape[1]
    total = n_kept + n_esc
    if total == 0:
        raise ValueError("need at least one orbital")
    basis = enumerate_basis(r, total, "fermion")

    if n_kept:
        gram = kept.conj().T @ kept
        if np.max(np.abs(gram - np.eye(n_kept))) > ORTHOGONALITY_TOL:
            raise ValueError("kept orbitals are not orthonormal")
        top = sector_lift(kept, n_kept, "fermion",
                          tuples_out=basis.sectors[n_kept])[:, 0]
        limit = MixedState(basis, {(n_kept, n_kept): np.outer(top, top.conj())})
    else:
        limit = MixedState(basis, {(0, 0): np.ones((1, 1), dtype=complex)})
    if n_esc == 0:
        regime = "strong"
    elif n_kept == 0:
        regime = "vacuum"
    else:
        regime = f"intermediate-sector-{n_kept}"

    def make(n):
        moved = np.column_stack([translate_orbital(space, escaping[:, j], n)
                                 for j in range(n_esc)]) if n_esc else escaping
        frame = np.column_stack([kept, moved]) if n_esc else kept
        gram = frame.conj().T @ frame
        if np.max(np.abs(gram - np.eye(total))) > ORTHOGONALITY_TOL:
            raise ValueError(f"orbital frame at step {n} is not orthonormal")
        top = sector_lift(frame, total, "fermion",
                          tuples_out=basis.sectors[total])[:, 0]
        full = np.zeros(basis.dim, dtype=complex)
        full[basis.sector_slice(total)] = top
        return pure_state(basis, full)

    return StateSequence(basis=basis, generator=make, declared_limit=limit,
                         description=f"escaping determinants, {regime} regime",
                         step_cap=space.points // 2)


def free_evolution_sequence(space: OneBodySpace, initial: MixedState,
                            times) -> StateSequence:
    """Conjugation of a state by the lifted free propagator at listed times.

    The propagator is assembled from the exact eigendecomposition of the
    kinetic matrix, so the conjugation identity for density matrices holds
    to roundoff.  On a finite box the motion is quasi-periodic; the vacuum
    is declared as the limit only so that pairing decay can be tabulated,
    never asserted.
    """
    basis = initial.basis
    if basis.r != space.n_modes:
        raise ValueError("state and lattice have different mode counts")
    times = list(times)
    energy, frame = np.linalg.eigh(kinetic_operator(space).matrix)

    def make(idx):
        t = times[idx]
        propagator = (frame * np.exp(-1j * energy * t)) @ frame.conj().T
        lifts = [sector_lift(propagator, k, basis.statistics,
                             tuples_out=basis.sectors[k])
                 for k in range(basis.N + 1)]
        blocks = {}
        for (m, n), block in initial.blocks.items():
            blocks[(m, n)] = lifts[m] @ block @ lifts[n].conj().T
        return MixedState(basis, blocks)

    vacuum = MixedState(basis, {(0, 0): np.ones((1, 1), dtype=complex)})
    return StateSequence(basis=basis, generator=make, declared_limit=vacuum,
                         description="free kinetic evolution (quasi-periodic box)",
                         step_cap=len(times) - 1)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass
class GeometricReport:
    """Pairing deviations from the declared limit, tabulated along steps."""

    steps: list
    deviations: dict
    trends: dict
    member_numbers: list
    limit_number: float

    @property
    def lsc_gap(self) -> float:
        """How far the limit's particle number rises above the members'."""
        return self.limit_number - min(self.member_numbers)

    @property
    def lsc_satisfied(self) -> bool:
        return self.lsc_gap <= 1e-10

    def final_deviation(self) -> float:
        return max(float(v[-1]) for v in self.deviations.values())

    def csv(self) -> str:
        lines = ["n,p,q,deviation"]
        for (p, q), values in sorted(self.deviations.items()):
            for n, v in zip(self.steps, values):
                lines.append("%s,%d,%d,%.17g" % (n, p, q, v))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "trends": {f"{p},{q}": tag for (p, q), tag in sorted(self.trends.items())},
            "final_deviation": self.final_deviation(),
            "limit_particle_number": self.limit_number,
            "lsc_satisfied": self.lsc_satisfied,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _trend_tag(values: np.ndarray) -> str:
    first, last = float(values[0]), float(values[-1])
    if last <= 1e-12:
        return "converged"
    if last <= 0.5 * first:
        return "decaying"
    if last <= 2.0 * max(first, 1e-300):
        return "flat"
    return "growing"


def geometric_convergence_report(sequence: StateSequence, test_vectors,
                                 n_max: int, steps=None) -> GeometricReport:
    """Tabulate density-matrix pairings against the declared limit.

    ``test_vectors`` are one-body columns (compactly supported by intent);
    sector-p test states are their p-fold wedge or symmetric products.  The
    deviation for (p, q) at step n is the largest pairing gap between the
    member's and the limit's (p, q) density matrix.
    """
    if sequence.declared_limit is None:
        raise ValueError("sequence has no declared limit to compare against")
    basis = sequence.basis
    tests = np.column_stack([np.asarray(v, dtype=complex) for v in test_vectors])
    if tests.shape[0] != basis.r:
        raise ValueError("test vectors live on a different mode count")
    probes = [sector_lift(tests, p, basis.statistics, tuples_out=basis.sectors[p])
              for p in range(basis.N + 1)]
    limit_table = density_matrix_table(sequence.declared_limit)
    if steps is None:
        steps = list(range(n_max + 1))
    steps = list(steps)

    keys = [(p, q) for p in range(basis.N + 1) for q in range(basis.N + 1)
            if probes[p].shape[1] and probes[q].shape[1]]
    deviations = {key: np.zeros(len(steps)) for key in keys}
    member_numbers = []
    for col, n in enumerate(steps):
        member = sequence.member(n)
        table = density_matrix_table(member)
        member_numbers.append(float(np.trace(table[(1, 1)]).real))
        for p, q in keys:
            gap = probes[p].conj().T @ (table[(p, q)] - limit_table[(p, q)]) @ probes[q]
            deviations[(p, q)][col] = float(np.max(np.abs(gap)))
    trends = {key: _trend_tag(vals) for key, vals in deviations.items()}
    limit_number = average_particle_number(sequence.declared_limit)
    return GeometricReport(steps=steps, deviations=deviations, trends=trends,
                           member_numbers=member_numbers, limit_number=limit_number)


def concentration_function(space: OneBodySpace, profile: np.ndarray,
                           radius: float) -> float:
    """Largest mass any ball of the given radius can capture.

    The supremum over centers runs over lattice sites; distances honor the
    boundary (minimum image on the torus).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    profile = np.asarray(profile, dtype=float)
    distances = pair_distance_matrix(space)
    mass = (distances <= radius + 1e-12) @ (profile * space.volume_element)
    return float(mass.max())


@dataclass
class ConcentrationReport:
    """Concentration values per (step, radius) with a decay tag per radius."""

    radii: list
    values: np.ndarray
    trends: list = field(default_factory=list)

    def csv(self) -> str:
        lines = ["n,radius,concentration"]
        for i in range(self.values.shape[0]):
            for j, radius in enumerate(self.radii):
                lines.append("%d,%.17g,%.17g" % (i, radius, self.values[i, j]))
        return "\n".join(lines) + "\n"


def concentration_report(space: OneBodySpace, profiles, radii) -> ConcentrationReport:
    """Evaluate the concentration function along a family of densities."""
    profiles = [np.asarray(p, dtype=float) for p in profiles]
    radii = [float(R) for R in radii]
    values = np.zeros((len(profiles), len(radii)))
    for i, profile in enumerate(profiles):
        for j, radius in enumerate(radii):
            values[i, j] = concentration_function(space, profile, radius)
    trends = [_trend_tag(values[:, j]) for j in range(len(radii))]
    return ConcentrationReport(radii=radii, values=values, trends=trends)
