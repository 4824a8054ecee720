"""Scenario orchestration: one validated config in, a set of artifacts out.

Every scenario is a pure function of (config, seed, restarts): it returns
file contents as strings plus a manifest, and the caller decides where they
land on disk.  That keeps runs byte-reproducible and lets the HTTP service
and the CLI share one code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, RunConfig
from .fock import assemble_hamiltonian, enumerate_basis, sector_lift
from .io import build_manifest, csv_table
from .onebody import (OneBodySpace, as_matrix, build_lattice_space,
                      kinetic_operator, potential_operator, soft_coulomb,
                      two_body_kernel)
from .sequences import (concentration_report, escaping_product_family,
                        geometric_convergence_report)
from .solvers import (PekarModel, binding_scan, exact_ground_state,
                      finite_rank_minimize, hartree_fock_scf, hvz_table,
                      pekar_minimize)
from .solvers.meanfield import CROSS_CHECK_TOL, FRAME_TOL
from .solvers.polaron import DENSITY_TOL, SCF_RESIDUAL_TOL
from .solvers.spectral import RESIDUAL_TOL
from .states import density_profile, pure_state

TOLERANCES = {
    "spectral_residual": RESIDUAL_TOL,
    "scf_residual": SCF_RESIDUAL_TOL,
    "scf_density": DENSITY_TOL,
    "meanfield_cross_check": CROSS_CHECK_TOL,
    "frame_orthonormality": FRAME_TOL,
    "binding_tolerance": 1e-6,
}


class ComputationError(RuntimeError):
    """A solver or diagnostic failed while executing a valid config."""


@dataclass(frozen=True)
class ScenarioResult:
    files: dict
    summary: dict

    def file_names(self) -> list:
        return sorted(self.files)


def build_space(config: RunConfig) -> OneBodySpace:
    return build_lattice_space(d=config.space.dimension, n=config.space.sites,
                               L=config.space.length,
                               boundary=config.space.boundary)


def build_one_body(config: RunConfig, space: OneBodySpace) -> np.ndarray:
    h = as_matrix(kinetic_operator(space))
    if config.potential.kind == "gaussian-well":
        radius2 = np.sum(space.sites ** 2, axis=1)
        samples = -config.potential.depth * np.exp(
            -radius2 / config.potential.width ** 2)
        h = h + as_matrix(potential_operator(space, samples))
    return h


def build_interaction(config: RunConfig, space: OneBodySpace, statistics: str):
    if config.interaction.kind == "none" or config.interaction.strength == 0.0:
        return None
    softening = config.interaction.softening or space.spacing
    strength = config.interaction.strength
    return two_body_kernel(
        space, lambda d: strength * soft_coulomb(d, softening), statistics)


def build_pekar_model(config: RunConfig, space: OneBodySpace) -> PekarModel:
    softening = config.interaction.softening or space.spacing
    repulsion = (0.0 if config.interaction.kind == "none"
                 else config.interaction.strength)
    return PekarModel(space, n_max=config.resolved_cap(), repulsion=repulsion,
                      kernel=lambda d: soft_coulomb(d, softening),
                      statistics=config.resolved_statistics())


def _profile_rows(space: OneBodySpace, density):
    return [(site, float(value)) for site, value in enumerate(density)]


def _bump(space: OneBodySpace, center: int, width: int) -> np.ndarray:
    profile = np.zeros(space.n_modes)
    for j in range(width):
        profile[(center + j) % space.n_modes] = \
            math.sin(math.pi * (j + 0.5) / width) ** 2
    return profile / np.linalg.norm(profile)


def run_scenario(config: RunConfig, seed: int | None = None,
                 restarts: int | None = None) -> ScenarioResult:
    seed = config.solver.seed if seed is None else int(seed)
    restarts = config.solver.restarts if restarts is None else int(restarts)
    runner = _RUNNERS[config.scenario]
    try:
        files, outputs, summary = runner(config, seed, restarts)
    except (ValueError, ArithmeticError) as err:
        raise ComputationError(str(err)) from err
    files["manifest.json"] = build_manifest(
        config_dump=config.model_dump(), seed=seed, restarts=restarts,
        outputs=outputs, tolerances=TOLERANCES, summary=summary)
    return ScenarioResult(files=files, summary=summary)


def _run_exact(config, seed, restarts):
    space = build_space(config)
    statistics = config.resolved_statistics()
    basis = enumerate_basis(space.n_modes, config.resolved_cap(), statistics)
    w = build_interaction(config, space, statistics)
    operator = assemble_hamiltonian(basis, build_one_body(config, space), w)
    rows = []
    ground = None
    for sector in range(basis.N + 1):
        res = exact_ground_state(operator, sector)
        rows.append((sector, res.energy, res.gap, res.residual,
                     res.degenerate))
        if sector == config.particles:
            ground = res
    vector = np.zeros(basis.dim, dtype=complex)
    vector[basis.sector_slice(config.particles)] = ground.ground_vector
    density = density_profile(pure_state(basis, vector), space)
    files = {
        "energies.csv": csv_table(
            ("sector", "energy", "gap", "residual", "degenerate"), rows),
        "profile.csv": csv_table(("site", "rho"), _profile_rows(space, density)),
    }
    outputs = {"energies.csv": {"operation": "exact_ground_state"},
               "profile.csv": {"operation": "density_profile",
                               "sector": config.particles}}
    summary = {"energy": ground.energy, "gap": ground.gap,
               "degenerate": ground.degenerate}
    return files, outputs, summary


def _run_hf(config, seed, restarts):
    space = build_space(config)
    basis = enumerate_basis(space.n_modes, config.resolved_cap(), "fermion")
    w = build_interaction(config, space, "fermion")
    res = hartree_fock_scf(build_one_body(config, space), w, basis,
                           config.particles,
                           max_iter=config.solver.max_iterations)
    if not res.converged:
        raise ComputationError("mean-field loop did not converge")
    density = np.real(np.diag(res.gamma)) / space.volume_element
    files = {
        "energies.csv": csv_table(
            ("quantity", "value"),
            [("energy", res.energy),
             ("exact_expectation", res.exact_expectation),
             ("fock_gap", res.fock_gap),
             ("iterations", res.iterations)]),
        "profile.csv": csv_table(("site", "rho"), _profile_rows(space, density)),
    }
    outputs = {"energies.csv": {"operation": "hartree_fock_scf"},
               "profile.csv": {"operation": "hartree_fock_scf",
                               "field": "gamma diagonal"}}
    summary = {"energy": res.energy, "iterations": res.iterations,
               "converged": res.converged}
    return files, outputs, summary


def _run_rank(config, seed, restarts):
    space = build_space(config)
    statistics = config.resolved_statistics()
    basis = enumerate_basis(space.n_modes, config.resolved_cap(), statistics)
    w = build_interaction(config, space, statistics)
    res = finite_rank_minimize(build_one_body(config, space), w, basis,
                               config.particles, config.rank,
                               restarts=restarts, seed=seed,
                               max_outer=config.solver.max_iterations)
    rows = [("best", res.energy)]
    rows += [(f"restart-{k}", energy)
             for k, energy in enumerate(res.restart_energies)]
    lift = sector_lift(res.orbitals, config.particles, statistics,
                       tuples_out=basis.tuples(config.particles))
    vector = np.zeros(basis.dim, dtype=complex)
    vector[basis.sector_slice(config.particles)] = lift @ res.coefficients
    density = density_profile(pure_state(basis, vector), space)
    files = {
        "energies.csv": csv_table(("label", "energy"), rows),
        "profile.csv": csv_table(("site", "rho"), _profile_rows(space, density)),
    }
    outputs = {"energies.csv": {"operation": "finite_rank_minimize",
                                "rank": config.rank},
               "profile.csv": {"operation": "density_profile"}}
    summary = {"energy": res.energy, "rank": config.rank,
               "converged": res.converged, "iterations": res.iterations}
    return files, outputs, summary


def _run_hvz(config, seed, restarts):
    space = build_space(config)
    statistics = config.resolved_statistics()
    basis = enumerate_basis(space.n_modes, config.resolved_cap(), statistics)
    w = build_interaction(config, space, statistics)
    kinetic = as_matrix(kinetic_operator(space))
    dressed = build_one_body(config, space)
    table = hvz_table(dressed, w, basis, h_free=kinetic)
    operator = assemble_hamiltonian(basis, dressed, w)
    ground = exact_ground_state(operator, config.particles)
    vector = np.zeros(basis.dim, dtype=complex)
    vector[basis.sector_slice(config.particles)] = ground.ground_vector
    density = density_profile(pure_state(basis, vector), space)
    files = {
        "energies.csv": table.energies_csv(),
        "margins.csv": table.margins_csv(),
        "profile.csv": csv_table(("site", "rho"), _profile_rows(space, density)),
    }
    outputs = {"energies.csv": {"operation": "hvz_table"},
               "margins.csv": {"operation": "hvz_table"},
               "profile.csv": {"operation": "density_profile",
                               "sector": config.particles}}
    summary = {
        "monotonicity_violation": table.monotonicity_violation,
        "interaction_nonnegative": table.interaction_nonnegative,
        "verdicts": {f"{n},{k}": v for (n, k), v in table.verdicts.items()},
    }
    return files, outputs, summary


def _run_pekar(config, seed, restarts):
    space = build_space(config)
    model = build_pekar_model(config, space)
    res = pekar_minimize(model, config.particles, config.alpha,
                         restarts=restarts, seed=seed,
                         max_iter=config.solver.max_iterations)
    density = res.density / space.volume_element
    files = {
        "energies.csv": csv_table(
            ("quantity", "value"),
            [("energy", res.energy), ("mu", res.mu),
             ("residual", res.residual), ("iterations", res.iterations),
             ("converged", int(res.converged))]),
        "profile.csv": csv_table(("site", "rho"), _profile_rows(space, density)),
    }
    outputs = {"energies.csv": {"operation": "pekar_minimize",
                                "alpha": config.alpha},
               "profile.csv": {"operation": "pekar_minimize",
                               "field": "density"}}
    summary = {"energy": res.energy, "mu": res.mu,
               "converged": res.converged, "seed_label": res.seed_label}
    return files, outputs, summary


def _run_scan(config, seed, restarts):
    if config.particles < 2:
        raise ConfigError("particles: binding scans need at least two")
    space = build_space(config)
    model = build_pekar_model(config, space)
    alphas = np.linspace(config.scan.start, config.scan.stop,
                         config.scan.points)
    curve = binding_scan(model, alphas, n_particles=config.particles,
                         restarts=restarts, seed=seed,
                         max_iter=config.solver.max_iterations)
    final = pekar_minimize(model, config.particles, float(alphas[-1]),
                           restarts=restarts, seed=seed,
                           max_iter=config.solver.max_iterations)
    energy_rows = [
        tuple([alpha] + [curve.sector_energies[k][i]
                         for k in sorted(curve.sector_energies)])
        for i, alpha in enumerate(alphas)]
    files = {
        "binding_curve.csv": curve.csv(),
        "energies.csv": csv_table(
            ["alpha"] + [f"e{k}" for k in sorted(curve.sector_energies)],
            energy_rows),
        "profile.csv": csv_table(
            ("site", "rho"),
            _profile_rows(space, final.density / space.volume_element)),
    }
    outputs = {"binding_curve.csv": {"operation": "binding_scan"},
               "energies.csv": {"operation": "binding_scan"},
               "profile.csv": {"operation": "pekar_minimize",
                               "alpha": float(alphas[-1])}}
    summary = {
        "threshold": curve.threshold,
        "threshold_bracket": curve.threshold_bracket,
        "monotone_ok": curve.monotone_ok,
        "convex_ok": curve.convex_ok,
        "reference_threshold": curve.reference_threshold,
        "all_converged": bool(all(all(v) for v in curve.converged.values())),
    }
    return files, outputs, summary


def _run_escaping(config, seed, restarts):
    space = build_space(config)
    seq = config.sequence
    if seq.steps > space.points // 2:
        raise ConfigError(f"sequence.steps: at most {space.points // 2} on "
                          f"this box before boundary contamination")
    phi = _bump(space, seq.center, seq.width)
    runner = _bump(space, seq.center + seq.width + 1, seq.width)
    statistics = config.resolved_statistics()
    family = escaping_product_family(space, phi, statistics, runner=runner)
    tests = [np.eye(space.n_modes, dtype=complex)[:, j]
             for j in range(min(seq.probe_sites, space.n_modes))]
    report = geometric_convergence_report(family, tests, n_max=seq.steps)
    profiles = [density_profile(family.member(step), space)
                for step in report.steps]
    radii = [space.spacing * scale for scale in (1.0, 2.0, 4.0, 8.0)]
    concentration = concentration_report(space, profiles, radii)
    files = {
        "convergence.csv": report.csv(),
        "concentration.csv": concentration.csv(),
    }
    outputs = {"convergence.csv": {"operation":
                                   "geometric_convergence_report"},
               "concentration.csv": {"operation": "concentration_report"}}
    summary = dict(report.summary(),
                   concentration_trends=list(concentration.trends))
    return files, outputs, summary


_RUNNERS = {
    "exact": _run_exact,
    "hf": _run_hf,
    "rank": _run_rank,
    "hvz": _run_hvz,
    "pekar": _run_pekar,
    "scan": _run_scan,
    "escaping": _run_escaping,
}
