"""Worked state families, convergence reports, and escape diagnostics."""

import json
import math
import unittest

import numpy as np

from focklab.fock import assemble_hamiltonian, enumerate_basis, fock_lift
from focklab.localization import localize_via_formula
from focklab.onebody import (
    build_lattice_space,
    kinetic_operator,
    soft_coulomb,
    two_body_kernel,
    window_localizer,
)
from focklab.sequences import (
    ConcentrationReport,
    StateSequence,
    concentration_function,
    concentration_report,
    escaping_product_family,
    escaping_product_sequence,
    free_evolution_sequence,
    geometric_convergence_report,
    hartree_sequence,
    hf_escaping_sequence,
    translate_orbital,
    translation_operator,
)
from focklab.states import average_particle_number, density_matrix, pure_state

RNG = np.random.default_rng(20240519)

WIDE = build_lattice_space(d=1, n=24, L=12.0)
TORUS = build_lattice_space(d=1, n=24, L=12.0, boundary="periodic")


def bump(center, width, n=24):
    x = np.zeros(n)
    for j in range(width):
        x[(center + j) % n] = math.sin(math.pi * (j + 0.5) / width) ** 2
    return x / np.linalg.norm(x)


def trace_distance(a, b):
    delta = a.assembled() - b.assembled()
    return float(np.sum(np.abs(np.linalg.eigvalsh(delta))))


class TranslateTest(unittest.TestCase):
    def test_zero_steps_is_the_identity(self):
        phi = bump(3, 5)
        np.testing.assert_allclose(translate_orbital(WIDE, phi, 0), phi)

    def test_periodic_translation_rolls(self):
        phi = bump(3, 5)
        rolled = translate_orbital(TORUS, phi, 7)
        np.testing.assert_allclose(rolled, np.roll(phi, 7))

    def test_dirichlet_translation_out_of_the_box_is_rejected(self):
        phi = bump(20, 4)
        with self.assertRaises(ValueError):
            translate_orbital(WIDE, phi, 6)


class EscapingPairTest(unittest.TestCase):
    def test_members_are_two_body_states(self):
        state = escaping_product_sequence(WIDE, bump(2, 5), 8, "fermion")
        self.assertAlmostEqual(average_particle_number(state), 2.0, places=12)
        self.assertAlmostEqual(float(np.trace(state.block(2, 2)).real), 1.0,
                               places=12)

    def test_coincident_bosonic_pair_at_step_zero(self):
        state = escaping_product_sequence(WIDE, bump(2, 5), 0, "boson")
        self.assertAlmostEqual(float(np.trace(state.block(2, 2)).real), 1.0,
                               places=12)

    def test_coincident_fermionic_pair_is_rejected(self):
        with self.assertRaises(ValueError):
            escaping_product_sequence(WIDE, bump(2, 5), 0, "fermion")

    def test_one_body_matrix_approaches_the_fixed_orbital(self):
        phi = bump(1, 4)
        far = escaping_product_sequence(WIDE, phi, 12, "fermion")
        dm = density_matrix(far, 1, 1).matrix
        window = np.zeros(24)
        window[:8] = 1.0
        masked = (window[:, None] * (dm - np.outer(phi, phi.conj()))
                  * window[None, :])
        self.assertLess(np.max(np.abs(masked)), 1e-12)

    def test_report_shows_convergence_and_number_drop(self):
        family = escaping_product_family(WIDE, bump(2, 5), "fermion",
                                         runner=bump(4, 5))
        tests = [bump(0, 7), bump(3, 5)]
        report = geometric_convergence_report(family, tests, n_max=12,
                                              steps=[1, 4, 8, 12])
        self.assertLess(report.final_deviation(), 1e-6)
        self.assertTrue(report.lsc_satisfied)
        self.assertAlmostEqual(report.limit_number, 1.0, places=12)
        self.assertAlmostEqual(min(report.member_numbers), 2.0, places=12)

    def test_step_cap_blocks_boundary_contamination(self):
        family = escaping_product_family(WIDE, bump(2, 5), "boson")
        with self.assertRaises(ValueError):
            family.member(13)

    def test_local_compactness_proxy(self):
        # A fixed compact window makes the escaping family converge in norm.
        phi = bump(1, 4)
        family = escaping_product_family(WIDE, phi, "fermion", runner=bump(3, 4))
        window = np.zeros(24)
        window[:8] = 1.0
        localizer = window_localizer(WIDE, window)
        localized_limit = localize_via_formula(family.declared_limit, localizer)
        member = localize_via_formula(family.member(12), localizer)
        self.assertLess(trace_distance(member, localized_limit), 1e-6)

    def test_localization_continuity_along_the_family(self):
        phi = bump(1, 4)
        family = escaping_product_family(WIDE, phi, "fermion", runner=bump(3, 4))
        window = np.zeros(24)
        window[:8] = 1.0
        localizer = window_localizer(WIDE, window)
        distances = [
            trace_distance(localize_via_formula(family.member(n), localizer),
                           localize_via_formula(family.declared_limit, localizer))
            for n in (4, 8, 12)
        ]
        self.assertLess(distances[-1], distances[0])
        self.assertLess(distances[-1], 1e-6)


class HartreeFamilyTest(unittest.TestCase):
    def test_constant_unit_family_is_strongly_constant(self):
        phi = bump(4, 6)
        seq = hartree_sequence(WIDE, lambda n: phi, phi, 3)
        self.assertLess(trace_distance(seq.member(5), seq.declared_limit), 1e-12)
        self.assertAlmostEqual(average_particle_number(seq.declared_limit), 3.0,
                               places=12)

    def test_half_mass_limit_has_binomial_weights(self):
        core = bump(1, 4) / math.sqrt(2.0)

        def family(n):
            return core + translate_orbital(WIDE, bump(1, 4),
                                            min(4 + n, 18)) / math.sqrt(2.0)

        seq = hartree_sequence(WIDE, family, core, 2)
        weights = [float(np.trace(seq.declared_limit.block(k, k)).real)
                   for k in range(3)]
        np.testing.assert_allclose(weights, [0.25, 0.5, 0.25], atol=1e-12)
        report = geometric_convergence_report(
            seq, [bump(0, 6)], n_max=8, steps=[0, 4, 8])
        self.assertLess(report.final_deviation(), 1e-6)
        # Half the mass escapes: the limit holds one particle of the two.
        self.assertAlmostEqual(report.limit_number, 1.0, places=12)
        self.assertFalse(report.limit_number > min(report.member_numbers) - 1e-9)

    def test_zero_limit_orbital_gives_the_vacuum(self):
        seq = hartree_sequence(WIDE, lambda n: bump(n % 8, 4), np.zeros(24), 2)
        self.assertEqual(set(seq.declared_limit.blocks), {(0, 0)})

    def test_overweight_limit_orbital_is_rejected(self):
        with self.assertRaises(ValueError):
            hartree_sequence(WIDE, lambda n: bump(0, 4), 1.1 * bump(0, 4), 2)

    def test_number_conserving_convergence_is_strong(self):
        # Mass stays put, the orbital just settles: trace-norm convergence.
        phi = bump(3, 6)
        wiggle = bump(9, 4)

        def family(n):
            mix = phi + wiggle / (2.0 ** n)
            return mix / np.linalg.norm(mix)

        seq = hartree_sequence(WIDE, family, phi, 2)
        distances = [trace_distance(seq.member(n), seq.declared_limit)
                     for n in (0, 4, 8, 16)]
        for earlier, later in zip(distances, distances[1:]):
            self.assertLess(later, earlier)
        self.assertLess(distances[-1], 1e-4)
        numbers = [average_particle_number(seq.member(n)) for n in (0, 4, 8)]
        np.testing.assert_allclose(numbers, 2.0, atol=1e-12)


class SlaterFamilyTest(unittest.TestCase):
    def test_all_kept_orbitals_converge_strongly(self):
        kept = np.column_stack([bump(0, 4), bump(6, 4)])
        seq = hf_escaping_sequence(WIDE, kept, np.zeros((24, 0)))
        self.assertIn("strong", seq.description)
        self.assertLess(trace_distance(seq.member(3), seq.declared_limit), 1e-12)

    def test_all_escaping_orbitals_converge_to_the_vacuum(self):
        esc = np.column_stack([bump(0, 4), bump(6, 4)])
        seq = hf_escaping_sequence(WIDE, np.zeros((24, 0)), esc)
        self.assertIn("vacuum", seq.description)
        self.assertEqual(set(seq.declared_limit.blocks), {(0, 0)})
        report = geometric_convergence_report(seq, [bump(0, 6), bump(5, 4)],
                                              n_max=12, steps=[0, 6, 12])
        self.assertLess(report.final_deviation(), 1e-8)

    def test_one_kept_of_two_puts_unit_weight_in_sector_one(self):
        seq = hf_escaping_sequence(WIDE, bump(0, 5)[:, None], bump(6, 5)[:, None])
        self.assertIn("intermediate-sector-1", seq.description)
        limit_weight = float(np.trace(seq.declared_limit.block(1, 1)).real)
        self.assertAlmostEqual(limit_weight, 1.0, places=12)
        report = geometric_convergence_report(seq, [bump(0, 6)], n_max=12,
                                              steps=[0, 6, 12])
        self.assertLess(report.final_deviation(), 1e-8)
        self.assertTrue(report.lsc_satisfied)

    def test_overlapping_frames_are_rejected(self):
        phi = bump(2, 6)
        with self.assertRaises(ValueError):
            hf_escaping_sequence(WIDE, phi[:, None], phi[:, None]).member(0)

    def test_non_orthonormal_kept_orbitals_are_rejected(self):
        with self.assertRaises(ValueError):
            hf_escaping_sequence(WIDE, 0.5 * bump(0, 4)[:, None], np.zeros((24, 0)))


class FreeEvolutionTest(unittest.TestCase):
    def setUp(self):
        self.space = build_lattice_space(d=1, n=8, L=4.0)
        basis = enumerate_basis(8, 2, "boson")
        v = RNG.normal(size=basis.dim) + 1j * RNG.normal(size=basis.dim)
        self.initial = pure_state(basis, v / np.linalg.norm(v))
        self.seq = free_evolution_sequence(self.space, self.initial,
                                           [0.0, 0.7, 1.9])

    def test_time_zero_returns_the_initial_state(self):
        self.assertLess(trace_distance(self.seq.member(0), self.initial), 1e-12)

    def test_particle_number_is_conserved(self):
        numbers = [average_particle_number(self.seq.member(i)) for i in range(3)]
        np.testing.assert_allclose(numbers, numbers[0], atol=1e-10)

    def test_density_matrices_conjugate_by_the_propagator(self):
        energy, frame = np.linalg.eigh(kinetic_operator(self.space).matrix)
        t = 1.9
        u = (frame * np.exp(-1j * energy * t)) @ frame.conj().T
        member = self.seq.member(2)
        for p in range(3):
            for q in range(3):
                from focklab.fock import sector_lift
                basis = self.initial.basis
                up = sector_lift(u, p, "boson", tuples_out=basis.sectors[p])
                uq = sector_lift(u, q, "boson", tuples_out=basis.sectors[q])
                want = up @ density_matrix(self.initial, p, q).matrix @ uq.conj().T
                got = density_matrix(member, p, q).matrix
                self.assertLess(np.max(np.abs(got - want)), 1e-10)


class ReportTest(unittest.TestCase):
    def test_constant_sequence_has_zero_deviations(self):
        basis = enumerate_basis(6, 2, "fermion")
        v = RNG.normal(size=basis.dim) + 1j * RNG.normal(size=basis.dim)
        state = pure_state(basis, v / np.linalg.norm(v))
        seq = StateSequence(basis=basis, generator=lambda n: state,
                            declared_limit=state, description="constant")
        report = geometric_convergence_report(seq, [np.eye(6)[:, 0]], n_max=3)
        self.assertEqual(report.final_deviation(), 0.0)
        self.assertTrue(all(tag == "converged" for tag in report.trends.values()))

    def test_missing_limit_is_rejected(self):
        basis = enumerate_basis(4, 1, "boson")
        vac = np.zeros(basis.dim, dtype=complex)
        vac[0] = 1.0
        seq = StateSequence(basis=basis,
                            generator=lambda n: pure_state(basis, vac))
        with self.assertRaises(ValueError):
            geometric_convergence_report(seq, [np.eye(4)[:, 0]], n_max=2)

    def test_csv_and_json_formats(self):
        family = escaping_product_family(WIDE, bump(2, 5), "boson")
        report = geometric_convergence_report(family, [bump(0, 6)], n_max=4,
                                              steps=[0, 2, 4])
        lines = report.csv().strip().split("\n")
        self.assertEqual(lines[0], "n,p,q,deviation")
        self.assertEqual(len(lines), 1 + 9 * 3)
        summary = json.loads(report.summary_json())
        self.assertIn("trends", summary)
        self.assertIn("lsc_satisfied", summary)


class ConcentrationTest(unittest.TestCase):
    def test_single_site_mass_is_captured_by_any_ball(self):
        profile = np.zeros(24)
        profile[5] = 1.0 / WIDE.volume_element
        self.assertAlmostEqual(concentration_function(WIDE, profile, 0.6), 1.0,
                               places=13)

    def test_uniform_profile_scales_with_the_window(self):
        profile = np.ones(24) / (24 * WIDE.volume_element)
        # Radius 1.0 at spacing 0.5 covers five sites centered anywhere inland.
        got = concentration_function(WIDE, profile, 1.0)
        self.assertAlmostEqual(got, 5.0 / 24.0, places=13)

    def test_spreading_family_decays(self):
        profiles = []
        for width in (3, 9, 21):
            phi = bump(1, width)
            profiles.append(np.abs(phi) ** 2 / WIDE.volume_element)
        report = concentration_report(WIDE, profiles, [0.8])
        self.assertEqual(report.trends, ["decaying"])
        self.assertTrue(np.all(report.values <= 1.0 + 1e-12))
        self.assertTrue(np.all(report.values >= 0.0))

    def test_csv_format(self):
        profile = np.ones(24) / (24 * WIDE.volume_element)
        report = concentration_report(WIDE, [profile], [0.6, 1.2])
        lines = report.csv().strip().split("\n")
        self.assertEqual(lines[0], "n,radius,concentration")
        self.assertEqual(len(lines), 3)

    def test_nonpositive_radius_is_rejected(self):
        with self.assertRaises(ValueError):
            concentration_function(WIDE, np.ones(24), 0.0)


class TranslationTest(unittest.TestCase):
    def test_zero_and_full_period_shifts_are_identity(self):
        np.testing.assert_allclose(translation_operator(TORUS, 0), np.eye(24))
        np.testing.assert_allclose(translation_operator(TORUS, 24), np.eye(24))

    def test_shifts_are_unitary_permutations(self):
        tau = translation_operator(TORUS, 5)
        np.testing.assert_allclose(tau @ tau.T, np.eye(24), atol=1e-15)
        self.assertEqual(int(np.sum(tau)), 24)

    def test_dirichlet_geometry_is_rejected(self):
        with self.assertRaises(ValueError):
            translation_operator(WIDE, 1)

    def test_two_dimensional_shift_moves_a_point_mass(self):
        torus2 = build_lattice_space(d=2, n=4, L=2.0, boundary="periodic")
        tau = translation_operator(torus2, (1, 2))
        src = np.zeros(16)
        src[np.ravel_multi_index((0, 0), (4, 4))] = 1.0
        moved = tau @ src
        self.assertEqual(moved[np.ravel_multi_index((1, 2), (4, 4))], 1.0)

    def test_translation_invariant_hamiltonian_commutes_with_the_lift(self):
        torus = build_lattice_space(d=1, n=6, L=3.0, boundary="periodic")
        basis = enumerate_basis(6, 2, "fermion")
        kernel = two_body_kernel(torus, lambda d: soft_coulomb(d, 0.5), "fermion")
        ham = assemble_hamiltonian(basis, kinetic_operator(torus), kernel)
        tau = translation_operator(torus, 2)
        lift = fock_lift(basis, tau)
        conjugated = lift @ ham @ lift.adjoint()
        gap = max(
            np.max(np.abs(conjugated.block(m, n) - ham.block(m, n)))
            for m in range(3) for n in range(3)
        )
        self.assertLess(gap, 1e-10)
