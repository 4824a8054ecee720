"""Self-contained identity battery: every closed-form residual in one table.

``verify_suite("quick")`` runs the whole battery at sizes chosen to finish
in well under two minutes; ``"full"`` adds the doubling-construction oracle
for the localization map, which is the slowest independent cross-check in
the package.  Each row records the worst residual observed for one identity
together with the tolerance it is held to; the suite never weakens a
tolerance to pass.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .fock import (assemble_hamiltonian, car_ccr_residual, enumerate_basis,
                   sector_lift, wedge)
from .localization import (localize_via_doubling, localize_via_formula,
                           localized_hartree_blocks, composition_check,
                           trace_complementarity_check)
from .onebody import (LocalizationOperator, as_matrix, build_lattice_space,
                      ims_identity_check, ims_partition, kinetic_operator,
                      soft_coulomb, two_body_kernel)
from .solvers import (PekarModel, exact_ground_state, finite_rank_minimize,
                      hartree_fock_scf, hoffmann_ostenhof_check,
                      pekar_minimize)
from .states import (MixedState, blocks_from_density_matrices,
                     density_matrix, density_matrix_table, pure_state)

LEVELS = ("quick", "full")


@dataclass(frozen=True)
class VerifyRow:
    name: str
    residual: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class VerifyReport:
    level: str
    rows: list
    elapsed: float

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def failures(self) -> list:
        return [row for row in self.rows if not row.passed]

    def table(self) -> str:
        width = max(len(row.name) for row in self.rows) + 2
        lines = ["%-*s %12s %11s  %s" % (width, "identity", "residual",
                                         "tolerance", "status")]
        for row in self.rows:
            lines.append("%-*s %12.3e %11.1e  %s"
                         % (width, row.name, row.residual, row.tolerance,
                            "pass" if row.passed else "FAIL"))
        lines.append("%d/%d identities hold (%s level, %.1f s)"
                     % (sum(r.passed for r in self.rows), len(self.rows),
                        self.level, self.elapsed))
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "elapsed_seconds": self.elapsed,
            "all_passed": self.all_passed,
            "rows": [{"name": row.name, "residual": row.residual,
                      "tolerance": row.tolerance, "passed": row.passed}
                     for row in self.rows],
        }


def _random_unit(rng, n):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _random_contraction(rng, n):
    raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return LocalizationOperator(raw / (np.linalg.norm(raw, 2) * 1.25))


def _random_state(rng, basis):
    blocks = {}
    for n in range(basis.N + 1):
        dim = basis.sector_dims[n]
        raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        blocks[(n, n)] = raw @ raw.conj().T
    total = sum(np.trace(b).real for b in blocks.values())
    return MixedState(basis, {k: b / total for k, b in blocks.items()})


def verify_suite(level: str = "quick", seed: int = 20240521) -> VerifyReport:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    rows = []

    def add(name, residual, tolerance):
        residual = float(residual)
        rows.append(VerifyRow(name=name, residual=residual,
                              tolerance=tolerance,
                              passed=residual <= tolerance))

    fermi = enumerate_basis(6, 3, "fermion")
    worst = max(car_ccr_residual(fermi, _random_unit(rng, 6),
                                 _random_unit(rng, 6)) for _ in range(50))
    add("ladder anticommutators (6 modes, 3 fermions)", worst, 1e-12)

    bose = enumerate_basis(3, 6, "boson")
    worst = max(car_ccr_residual(bose, _random_unit(rng, 3),
                                 _random_unit(rng, 3)) for _ in range(50))
    add("ladder commutators below the cut (3 modes, 6 bosons)", worst, 1e-12)

    worst = 0.0
    for statistics in ("fermion", "boson"):
        basis = enumerate_basis(4, 3, statistics)
        for _ in range(10):
            state = _random_state(rng, basis)
            rebuilt = blocks_from_density_matrices(density_matrix_table(state),
                                                   basis)
            for key, block in state.blocks.items():
                worst = max(worst, float(np.max(np.abs(
                    block - rebuilt.blocks.get(key, np.zeros_like(block))))))
    add("density-matrix table round trip", worst, 1e-10)

    worst = 0.0
    for statistics, r in (("fermion", 5), ("boson", 3)):
        for n in range(1, 5):
            basis = enumerate_basis(r, n, statistics)
            vec = np.zeros(basis.dim, dtype=complex)
            vec[basis.sector_slice(n)] = _random_unit(rng,
                                                      basis.sector_dims[n])
            state = pure_state(basis, vec)
            for p in range(n + 1):
                trace = density_matrix(state, p, p).trace.real
                worst = max(worst, abs(trace - math.comb(n, p)))
    add("reduced-trace binomial law", worst, 1e-10)

    basis = enumerate_basis(4, 3, "boson")
    worst = 0.0
    for _ in range(5):
        localizer = _random_contraction(rng, 4)
        orbital = _random_unit(rng, 4)
        closed = localized_hartree_blocks(basis, orbital, localizer)
        vec = np.zeros(basis.dim, dtype=complex)
        vec[basis.sector_slice(3)] = sector_lift(
            orbital.reshape(4, 1), 3, "boson", tuples_out=basis.tuples(3))[:, 0]
        direct = localize_via_formula(pure_state(basis, vec), localizer)
        for key in set(closed) | set(direct.blocks):
            a = closed.get(key)
            b = direct.blocks.get(key)
            if a is None or b is None:
                worst = max(worst, float(np.max(np.abs(a if b is None else b))))
            else:
                worst = max(worst, float(np.max(np.abs(a - b))))
    add("product-state localization closed form", worst, 1e-10)

    fermi4 = enumerate_basis(4, 3, "fermion")
    worst = 0.0
    for _ in range(10):
        vec = _random_unit(rng, fermi4.sector_dims[3])
        worst = max(worst, trace_complementarity_check(
            fermi4, vec, _random_contraction(rng, 4)))
    add("localization weight complementarity", worst, 1e-10)

    worst = 0.0
    for statistics in ("fermion", "boson"):
        basis = enumerate_basis(3, 2, statistics)
        for _ in range(5):
            worst = max(worst, composition_check(
                _random_state(rng, basis), _random_contraction(rng, 3),
                _random_contraction(rng, 3)))
    add("localization composition", worst, 1e-10)

    if level == "full":
        worst = 0.0
        for statistics in ("fermion", "boson"):
            basis = enumerate_basis(3, 2, statistics)
            for _ in range(5):
                state = _random_state(rng, basis)
                localizer = _random_contraction(rng, 3)
                via_formula = localize_via_formula(state, localizer)
                via_doubling = localize_via_doubling(state, localizer)
                for key, block in via_formula.blocks.items():
                    other = via_doubling.blocks.get(key, np.zeros_like(block))
                    worst = max(worst, float(np.max(np.abs(block - other))))
        add("localization vs doubling construction", worst, 1e-9)

    space = build_lattice_space(d=1, n=16, L=8.0)
    worst = 0.0
    for _ in range(20):
        raw = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        hermitian = raw + raw.conj().T
        chi, eta = ims_partition(space, float(rng.uniform(1.0, 3.5)))
        worst = max(worst, ims_identity_check(hermitian, chi, eta))
    add("partition-of-unity double-commutator split", worst, 1e-10)

    chain = build_lattice_space(d=1, n=6, L=3.0)
    kin = as_matrix(kinetic_operator(chain))
    w = two_body_kernel(chain, lambda d: soft_coulomb(d, chain.spacing),
                        "fermion")
    chain_basis = enumerate_basis(6, 2, "fermion")
    exact = exact_ground_state(
        assemble_hamiltonian(chain_basis, kin, w), 2).energy
    hf = hartree_fock_scf(kin, w, chain_basis, 2)
    full_rank = finite_rank_minimize(kin, w, chain_basis, 2, 6, restarts=2,
                                     seed=seed)
    violation = max(exact - hf.energy,
                    abs(full_rank.energy - exact),
                    exact - full_rank.energy)
    add("variational chain (exact <= mean field, full rank = exact)",
        violation, 1e-7)

    model = PekarModel(build_lattice_space(d=1, n=12, L=6.0), n_max=1,
                       repulsion=1.0)
    scf = pekar_minimize(model, 1, 3.0, restarts=1, seed=seed)
    add("polaron fixed-point residual", scf.residual, 1e-7)

    lattice = build_lattice_space(d=1, n=10, L=5.0)
    ho_basis = enumerate_basis(10, 1, "fermion")
    x = lattice.axis_coordinates()
    phi = np.exp(-(x ** 2))
    phi /= np.linalg.norm(phi)
    vec = np.zeros(ho_basis.dim, dtype=complex)
    vec[ho_basis.sector_slice(1)] = phi
    margin = hoffmann_ostenhof_check(pure_state(ho_basis, vec), lattice)
    add("kinetic-density equality for a real orbital", abs(margin), 1e-12)

    return VerifyReport(level=level, rows=rows,
                        elapsed=time.perf_counter() - start)
