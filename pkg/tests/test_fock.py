"""Tests for truncated Fock bases, ladder operators and second quantization.

The second-quantization checks compare sector restrictions against dense
first-quantized matrices built in oracles.py by explicit permutation sums.
"""

import math
import unittest

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

import oracles
from focklab.fock import (
    annihilation,
    assemble_hamiltonian,
    basis_state,
    car_ccr_residual,
    creation,
    enumerate_basis,
    fock_lift,
    number_operator,
    second_quantize_onebody,
    second_quantize_twobody,
    sector_coo_text,
    sector_lift,
    tensor_embedding,
    vacuum_state,
    wedge,
    weyl_coherent_state,
)
from focklab.onebody import TwoBodyKernel, two_body_kernel

RNG = np.random.default_rng(51_2024)


def random_unit(r, rng=RNG):
    f = rng.normal(size=r) + 1j * rng.normal(size=r)
    return f / np.linalg.norm(f)


def random_kernel(r, statistics, rng=RNG):
    """Dense Hermitian sorted-pair tensor, zero on fermionic equal pairs."""
    import itertools
    pairs = list(itertools.combinations_with_replacement(range(r), 2))
    t = rng.normal(size=(len(pairs), len(pairs))) + 1j * rng.normal(size=(len(pairs), len(pairs)))
    t = t + t.conj().T
    if statistics == "fermion":
        for a, (i, j) in enumerate(pairs):
            if i == j:
                t[a, :] = 0.0
                t[:, a] = 0.0
    return TwoBodyKernel(r, statistics, t)


class BasisTest(unittest.TestCase):
    def test_sector_sizes(self):
        self.assertEqual(enumerate_basis(2, 2, "fermion").sector_dims, (1, 2, 1))
        self.assertEqual(enumerate_basis(2, 2, "boson").sector_dims, (1, 2, 3))
        self.assertEqual(enumerate_basis(4, 2, "fermion").dim, 11)

    def test_vacuum_is_index_zero(self):
        basis = enumerate_basis(3, 2, "boson")
        self.assertEqual(basis.tuples(0), ((),))
        self.assertEqual(basis.global_index(0, ()), 0)

    def test_lexicographic_order(self):
        basis = enumerate_basis(3, 2, "fermion")
        self.assertEqual(basis.tuples(2), ((0, 1), (0, 2), (1, 2)))
        bose = enumerate_basis(2, 2, "boson")
        self.assertEqual(bose.tuples(2), ((0, 0), (0, 1), (1, 1)))

    def test_fermion_cutoff_above_modes_rejected(self):
        with self.assertRaises(ValueError):
            enumerate_basis(2, 3, "fermion")


class LadderTest(unittest.TestCase):
    def test_create_from_vacuum(self):
        basis = enumerate_basis(3, 2, "fermion")
        e1 = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(
            creation(basis, e1).apply(vacuum_state(basis)),
            basis_state(basis, (0,)))

    def test_pauli_exclusion(self):
        basis = enumerate_basis(3, 2, "fermion")
        e1 = np.array([1.0, 0.0, 0.0])
        out = creation(basis, e1).apply(basis_state(basis, (0,)))
        np.testing.assert_allclose(out, 0.0)

    def test_creation_order_gives_sign(self):
        basis = enumerate_basis(2, 2, "fermion")
        c1 = creation(basis, [1.0, 0.0])
        c2 = creation(basis, [0.0, 1.0])
        vac = vacuum_state(basis)
        np.testing.assert_allclose(
            c1.apply(c2.apply(vac)), basis_state(basis, (0, 1)))
        np.testing.assert_allclose(
            c2.apply(c1.apply(vac)), -basis_state(basis, (0, 1)))

    def test_annihilate_vacuum(self):
        basis = enumerate_basis(3, 3, "boson")
        np.testing.assert_allclose(
            annihilation(basis, random_unit(3)).apply(vacuum_state(basis)), 0.0)

    def test_annihilation_on_wedge(self):
        basis = enumerate_basis(2, 2, "fermion")
        out = annihilation(basis, [1.0, 0.0]).apply(basis_state(basis, (0, 1)))
        np.testing.assert_allclose(out, basis_state(basis, (1,)))

    def test_boson_double_occupation(self):
        basis = enumerate_basis(2, 2, "boson")
        out = annihilation(basis, [1.0, 0.0]).apply(basis_state(basis, (0, 0)))
        np.testing.assert_allclose(out, math.sqrt(2.0) * basis_state(basis, (0,)))

    def test_top_sector_truncated(self):
        basis = enumerate_basis(3, 2, "boson")
        top = basis_state(basis, (1, 1))
        np.testing.assert_allclose(creation(basis, random_unit(3)).apply(top), 0.0)

    def test_adjointness(self):
        for statistics in ("fermion", "boson"):
            basis = enumerate_basis(4, 3, statistics)
            f = random_unit(4)
            diff = creation(basis, f).adjoint().to_dense() - annihilation(basis, f).to_dense()
            self.assertLessEqual(np.abs(diff).max(), 1e-14)

    def test_creation_linear_annihilation_antilinear(self):
        basis = enumerate_basis(3, 2, "fermion")
        f, g = random_unit(3), random_unit(3)
        z = 0.3 - 1.2j
        lhs = creation(basis, z * f + g).to_dense()
        rhs = z * creation(basis, f).to_dense() + creation(basis, g).to_dense()
        np.testing.assert_allclose(lhs, rhs, atol=1e-14)
        lhs_a = annihilation(basis, z * f).to_dense()
        np.testing.assert_allclose(lhs_a, np.conj(z) * annihilation(basis, f).to_dense(),
                                   atol=1e-14)

    def test_fermionic_operator_norm_is_vector_norm(self):
        basis = enumerate_basis(4, 3, "fermion")
        for _ in range(50):
            f = RNG.normal(size=4) + 1j * RNG.normal(size=4)
            norm = np.linalg.norm(creation(basis, f).to_dense(), ord=2)
            self.assertLessEqual(abs(norm - np.linalg.norm(f)), 1e-10)


class CanonicalRelationsTest(unittest.TestCase):
    def test_fermion_residual(self):
        basis = enumerate_basis(6, 3, "fermion")
        for _ in range(5):
            self.assertLessEqual(
                car_ccr_residual(basis, random_unit(6), random_unit(6)), 1e-12)

    def test_fermion_full_space_when_nothing_cut(self):
        # N = r: no sector is truncated away, the relations hold everywhere
        basis = enumerate_basis(3, 3, "fermion")
        self.assertLessEqual(
            car_ccr_residual(basis, random_unit(3), random_unit(3)), 1e-12)

    def test_boson_residual_below_top(self):
        basis = enumerate_basis(3, 4, "boson")
        for _ in range(5):
            self.assertLessEqual(
                car_ccr_residual(basis, random_unit(3), random_unit(3)), 1e-12)

    def test_number_anticommutator_is_identity(self):
        basis = enumerate_basis(3, 2, "fermion")
        e1 = np.zeros(3)
        e1[0] = 1.0
        c, a = creation(basis, e1), annihilation(basis, e1)
        anti = (a @ c + c @ a).to_dense()
        below = basis.offsets[basis.N]
        np.testing.assert_allclose(anti[:below, :below], np.eye(below), atol=1e-14)


class SecondQuantizationTest(unittest.TestCase):
    def test_identity_gives_number_operator(self):
        for statistics in ("fermion", "boson"):
            basis = enumerate_basis(3, 3, statistics)
            num = number_operator(basis).to_dense()
            expected = np.concatenate(
                [np.full(len(basis.tuples(n)), n) for n in range(basis.N + 1)])
            np.testing.assert_allclose(num, np.diag(expected), atol=1e-14)

    def test_zero_matrix(self):
        basis = enumerate_basis(3, 2, "fermion")
        np.testing.assert_allclose(
            second_quantize_onebody(basis, np.zeros((3, 3))).to_dense(), 0.0)

    def test_diagonal_energies_add(self):
        basis = enumerate_basis(2, 2, "fermion")
        eps = np.diag([0.7, -0.3])
        op = second_quantize_onebody(basis, eps)
        state = basis_state(basis, (0, 1))
        np.testing.assert_allclose(op.apply(state), (0.7 - 0.3) * state, atol=1e-14)

    def test_matches_first_quantized_oracle(self):
        for statistics in ("fermion", "boson"):
            for r, N in [(4, 3), (5, 2)]:
                basis = enumerate_basis(r, N, statistics)
                A = RNG.normal(size=(r, r)) + 1j * RNG.normal(size=(r, r))
                A = A + A.conj().T
                op = second_quantize_onebody(basis, A)
                for n in range(N + 1):
                    expected = oracles.onebody_on_sector(A, n, statistics)
                    np.testing.assert_allclose(
                        op.block(n, n), expected, atol=1e-12,
                        err_msg=f"{statistics} sector {n}")

    def test_basis_change_covariance(self):
        for statistics in ("fermion", "boson"):
            basis = enumerate_basis(4, 3, statistics)
            A = RNG.normal(size=(4, 4))
            A = A + A.T
            U, _ = np.linalg.qr(RNG.normal(size=(4, 4)) + 1j * RNG.normal(size=(4, 4)))
            lifted = fock_lift(basis, U).to_dense()
            lhs = second_quantize_onebody(basis, U @ A @ U.conj().T).to_dense()
            rhs = lifted @ second_quantize_onebody(basis, A).to_dense() @ lifted.conj().T
            self.assertLessEqual(np.abs(lhs - rhs).max(), 1e-10)


class PairInteractionTest(unittest.TestCase):
    def test_zero_kernel(self):
        basis = enumerate_basis(3, 3, "fermion")
        w = two_body_kernel(3, np.zeros((3, 3)), "fermion")
        np.testing.assert_allclose(second_quantize_twobody(basis, w).to_dense(), 0.0)

    def test_kills_small_sectors(self):
        basis = enumerate_basis(3, 3, "boson")
        w = random_kernel(3, "boson")
        op = second_quantize_twobody(basis, w)
        self.assertNotIn((0, 0), op.blocks)
        self.assertNotIn((1, 1), op.blocks)

    def test_single_boson_mode_self_interaction(self):
        basis = enumerate_basis(1, 2, "boson")
        w = two_body_kernel(1, np.array([[3.0]]), "boson")
        op = second_quantize_twobody(basis, w)
        state = basis_state(basis, (0, 0))
        np.testing.assert_allclose(op.apply(state), 3.0 * state, atol=1e-14)

    def test_two_fermion_pair_energy(self):
        basis = enumerate_basis(2, 2, "fermion")
        table = np.array([[0.0, 1.7], [1.7, 0.0]])
        w = two_body_kernel(2, table, "fermion")
        state = basis_state(basis, (0, 1))
        np.testing.assert_allclose(
            second_quantize_twobody(basis, w).apply(state), 1.7 * state, atol=1e-14)

    def test_sector_two_matches_pair_operator(self):
        for statistics in ("fermion", "boson"):
            w = random_kernel(3, statistics)
            basis = enumerate_basis(3, 2, statistics)
            pair_op = oracles.pair_operator_from_kernel(w)
            expected = oracles.pair_on_sector(pair_op, 3, 2, statistics)
            np.testing.assert_allclose(
                second_quantize_twobody(basis, w).block(2, 2), expected, atol=1e-12)

    def test_sector_three_matches_pair_sum(self):
        w = random_kernel(4, "fermion")
        basis = enumerate_basis(4, 3, "fermion")
        pair_op = oracles.pair_operator_from_kernel(w)
        expected = oracles.pair_on_sector(pair_op, 4, 3, "fermion")
        np.testing.assert_allclose(
            second_quantize_twobody(basis, w).block(3, 3), expected, atol=1e-12)

    def test_boson_sector_three_multiplication_potential(self):
        table = np.abs(RNG.normal(size=(3, 3)))
        table = 0.5 * (table + table.T)
        w = two_body_kernel(3, table, "boson")
        basis = enumerate_basis(3, 3, "boson")
        expected = oracles.pair_on_sector(
            oracles.multiplication_pair_operator(table), 3, 3, "boson")
        np.testing.assert_allclose(
            second_quantize_twobody(basis, w).block(3, 3), expected, atol=1e-12)

    def test_statistics_mismatch_rejected(self):
        basis = enumerate_basis(3, 2, "fermion")
        w = random_kernel(3, "boson")
        with self.assertRaises(ValueError):
            second_quantize_twobody(basis, w)


class HamiltonianTest(unittest.TestCase):
    def test_vacuum_and_single_particle_blocks(self):
        basis = enumerate_basis(3, 2, "fermion")
        h = RNG.normal(size=(3, 3))
        h = h + h.T
        w = random_kernel(3, "fermion")
        H = assemble_hamiltonian(basis, h, w)
        np.testing.assert_allclose(H.block(0, 0), 0.0)
        np.testing.assert_allclose(H.block(1, 1), h, atol=1e-14)

    def test_hermitian(self):
        basis = enumerate_basis(3, 3, "boson")
        h = RNG.normal(size=(3, 3))
        h = h + h.T
        dense = assemble_hamiltonian(basis, h, random_kernel(3, "boson")).to_dense()
        self.assertLessEqual(np.abs(dense - dense.conj().T).max(), 1e-12)

    def test_no_interaction_reduces_to_one_body(self):
        basis = enumerate_basis(3, 2, "fermion")
        h = np.diag([1.0, 2.0, 3.0])
        np.testing.assert_allclose(
            assemble_hamiltonian(basis, h, None).to_dense(),
            second_quantize_onebody(basis, h).to_dense())


# ---------------------------------------------------------------------------
# products and coherent states
# ---------------------------------------------------------------------------

def test_wedge_of_orthonormal_modes_is_unit():
    basis = enumerate_basis(3, 2, "fermion")
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    out = wedge(basis, e1, e2, n1=1, n2=1)
    assert np.linalg.norm(out) == pytest.approx(1.0)
    np.testing.assert_allclose(
        out, basis_state(basis, (0, 1))[basis.sector_slice(2)])


def test_wedge_of_equal_vectors_vanishes():
    basis = enumerate_basis(3, 2, "fermion")
    f = random_unit(3)
    np.testing.assert_allclose(wedge(basis, f, f, n1=1, n2=1), 0.0, atol=1e-14)


def test_symmetric_square_is_sqrt2_tensor_square():
    basis = enumerate_basis(3, 2, "boson")
    f = random_unit(3)
    out = wedge(basis, f, f, n1=1, n2=1)
    embedded = tensor_embedding(3, 2, "boson") @ out
    np.testing.assert_allclose(
        embedded, math.sqrt(2.0) * np.kron(f, f), atol=1e-12)


def test_wedge_agrees_with_creation_string():
    for statistics in ("fermion", "boson"):
        basis = enumerate_basis(3, 3, statistics)
        f = random_unit(3)
        psi2 = oracles.random_state(RNG, len(basis.tuples(2)))
        via_product = wedge(basis, f, psi2, n1=1, n2=2)
        full = np.zeros(basis.dim, dtype=complex)
        full[basis.sector_slice(2)] = psi2
        via_ladder = creation(basis, f).apply(full)[basis.sector_slice(3)]
        np.testing.assert_allclose(via_product, via_ladder, atol=1e-12)


def test_wedge_exchange_symmetry():
    basis_f = enumerate_basis(4, 4, "fermion")
    a = oracles.random_state(RNG, len(basis_f.tuples(1)))
    b = oracles.random_state(RNG, len(basis_f.tuples(2)))
    lhs = wedge(basis_f, a, b, n1=1, n2=2)
    rhs = wedge(basis_f, b, a, n1=2, n2=1)
    np.testing.assert_allclose(lhs, (-1.0) ** (1 * 2) * rhs, atol=1e-12)
    basis_b = enumerate_basis(3, 3, "boson")
    a = oracles.random_state(RNG, len(basis_b.tuples(1)))
    b = oracles.random_state(RNG, len(basis_b.tuples(2)))
    np.testing.assert_allclose(
        wedge(basis_b, a, b, n1=1, n2=2), wedge(basis_b, b, a, n1=2, n2=1),
        atol=1e-12)


def test_wedge_overflow_rejected():
    basis = enumerate_basis(3, 2, "fermion")
    f = random_unit(3)
    with pytest.raises(ValueError, match="beyond the cutoff"):
        wedge(basis, f, basis_state(basis, (0, 1))[basis.sector_slice(2)],
              n1=1, n2=2)


class CoherentStateTest(unittest.TestCase):
    def test_zero_argument_gives_vacuum(self):
        basis = enumerate_basis(2, 3, "boson")
        vec, tail = weyl_coherent_state(basis, np.zeros(2))
        np.testing.assert_allclose(vec, vacuum_state(basis), atol=1e-14)
        self.assertEqual(tail, 0.0)

    def test_tail_bound_accepted(self):
        basis = enumerate_basis(2, 8, "boson")
        f = 0.3 * random_unit(2)
        vec, tail = weyl_coherent_state(basis, f)
        self.assertLessEqual(tail, 1e-8)
        self.assertAlmostEqual(np.linalg.norm(vec), 1.0, places=12)

    def test_tail_bound_rejected(self):
        basis = enumerate_basis(2, 2, "boson")
        with self.assertRaisesRegex(ValueError, "Poisson weight"):
            weyl_coherent_state(basis, [2.0, 0.0])

    def test_is_near_eigenvector_of_annihilation(self):
        basis = enumerate_basis(2, 10, "boson")
        f = np.array([0.25, -0.15 + 0.1j])
        vec, tail = weyl_coherent_state(basis, f)
        g = random_unit(2)
        out = annihilation(basis, g).apply(vec)
        expected = complex(np.vdot(g, f)) * vec
        self.assertLessEqual(np.linalg.norm(out - expected), 1e-3)

    def test_requires_bosons(self):
        basis = enumerate_basis(3, 2, "fermion")
        with self.assertRaises(ValueError):
            weyl_coherent_state(basis, random_unit(3))


# ---------------------------------------------------------------------------
# lifts and embeddings
# ---------------------------------------------------------------------------

class LiftTest(unittest.TestCase):
    def test_embedding_is_isometry(self):
        for statistics in ("fermion", "boson"):
            for r, n in [(3, 2), (4, 2), (3, 3)]:
                T = tensor_embedding(r, n, statistics)
                dim = T.shape[1]
                np.testing.assert_allclose(T.conj().T @ T, np.eye(dim), atol=1e-12)

    def test_embedding_matches_projector_oracle(self):
        for statistics in ("fermion", "boson"):
            T = tensor_embedding(4, 3, statistics)
            np.testing.assert_allclose(
                T, oracles.embedding_oracle(4, 3, statistics), atol=1e-12)

    def test_lift_intertwines_with_tensor_power(self):
        for statistics in ("fermion", "boson"):
            B = RNG.normal(size=(4, 3)) + 1j * RNG.normal(size=(4, 3))
            lifted = sector_lift(B, 2, statistics)
            T_in = tensor_embedding(3, 2, statistics)
            T_out = tensor_embedding(4, 2, statistics)
            np.testing.assert_allclose(
                T_out @ lifted, np.kron(B, B) @ T_in, atol=1e-12)

    def test_lift_of_unitary_is_unitary(self):
        U, _ = np.linalg.qr(RNG.normal(size=(3, 3)) + 1j * RNG.normal(size=(3, 3)))
        for statistics in ("fermion", "boson"):
            L = sector_lift(U, 2, statistics)
            np.testing.assert_allclose(L @ L.conj().T, np.eye(L.shape[0]), atol=1e-12)

    def test_lift_is_multiplicative(self):
        A = RNG.normal(size=(3, 3))
        B = RNG.normal(size=(3, 3))
        for statistics in ("fermion", "boson"):
            np.testing.assert_allclose(
                sector_lift(A @ B, 2, statistics),
                sector_lift(A, 2, statistics) @ sector_lift(B, 2, statistics),
                atol=1e-12)


@seed(11)
@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1),
       st.sampled_from(["fermion", "boson"]))
def test_fock_lift_preserves_products(key, statistics):
    rng = np.random.default_rng(key)
    basis = enumerate_basis(3, 2, statistics)
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 3))
    lhs = fock_lift(basis, A @ B).to_dense()
    rhs = (fock_lift(basis, A) @ fock_lift(basis, B)).to_dense()
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(lhs).max())


def test_coo_text_roundtrip():
    basis = enumerate_basis(2, 2, "fermion")
    op = number_operator(basis)
    text = sector_coo_text(op)
    assert text.startswith("# fock-operator r=2 N=2 statistics=fermion")
    rebuilt = np.zeros((basis.dim, basis.dim), dtype=complex)
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        m, n, row, col, re_part, im_part = line.split()
        i = basis.offsets[int(m)] + int(row)
        j = basis.offsets[int(n)] + int(col)
        rebuilt[i, j] = float(re_part) + 1j * float(im_part)
    np.testing.assert_allclose(rebuilt, op.to_dense(), atol=1e-15)


def test_dense_cap_enforced():
    basis = enumerate_basis(13, 13, "fermion")  # dimension 8192
    op = number_operator(basis)
    with pytest.raises(ValueError, match="dense cap"):
        op.to_dense()
    # blockwise application still works
    vec = vacuum_state(basis)
    np.testing.assert_allclose(op.apply(vec), 0.0)


if __name__ == "__main__":
    unittest.main()
