"""Geometric decomposition of many-body states under one-body localizers.

A localizer B (a contraction on the one-body space) splits a state into
sectors labelled by how many particles survive the cut.  Two independent
constructions are provided:

* ``localize_via_formula`` transforms the full table of reduced density
  matrices by tensor powers of B and rebuilds occupation blocks through the
  alternating inversion.  It works for any truncated state and any mode
  count the density-matrix machinery can handle.

* ``localize_via_doubling`` embeds the state isometrically into a lattice
  with twice as many modes, splitting each mode into a B-part and a
  complement part, then traces out the complement modes.  It is exact but
  exponential in the doubled mode count, so it is gated to tiny systems and
  serves as the cross-check oracle for the formula route.

For pure N-particle states ``localize_nbody`` computes the same
decomposition directly from the tensor representation, which also exposes
the complementarity between B and sqrt(1 - B B*).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .fock import (
    FockBasis,
    embed_sector_vectors,
    enumerate_basis,
    multiplicity_factorial,
    project_sector_vectors,
    sector_lift,
)
from .onebody import LocalizationOperator
from .states import MixedState, blocks_from_density_matrices, density_matrix_table, pure_state

DOUBLING_MODE_CAP = 8
DOUBLING_PARTICLE_CAP = 3
WEIGHT_CUTOFF = 1e-12
RANK_THRESHOLD = 1e-10


@dataclass(frozen=True)
class LocalizedDecomposition:
    """A state, the localizer applied to it, and the resulting sector split."""

    parent: MixedState
    localizer: LocalizationOperator
    result: MixedState
    sector_weights: np.ndarray

    def __post_init__(self):
        total = float(np.sum(self.sector_weights))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"sector weights sum to {total!r}, expected 1")


def localize_via_formula(state: MixedState, localizer: LocalizationOperator) -> MixedState:
    """Localize by transforming reduced density matrices with lifted powers of B.

    Every (p, q) density matrix of the result equals the parent's matrix
    sandwiched between the p-th and q-th lifted powers of the localizer.
    The occupation blocks are recovered with the alternating inversion, and
    the MixedState constructor certifies that the outcome is a valid state.
    """
    basis = state.basis
    b = localizer.matrix
    if b.shape[0] != basis.r:
        raise ValueError("localizer acts on a different number of modes")
    table = density_matrix_table(state)
    lifts = [
        sector_lift(b, k, basis.statistics, tuples_out=basis.sectors[k])
        for k in range(basis.N + 1)
    ]
    transformed = {}
    for (p, q), dm in table.items():
        transformed[(p, q)] = lifts[p] @ dm @ lifts[q].conj().T
    return blocks_from_density_matrices(transformed, basis)


def localize_via_doubling(state: MixedState, localizer: LocalizationOperator) -> MixedState:
    """Localize by isometric mode doubling followed by a partial trace.

    Each mode is split into a kept channel (weighted by B) and a complement
    channel (weighted by sqrt(1 - B'B)); the stacked map is an isometry, so
    lifting it sector by sector embeds the state into a 2r-mode lattice.
    Tracing out the complement modes yields the localized state.  Exact but
    exponentially sized, hence the hard gate on small systems.
    """
    basis = state.basis
    r = basis.r
    if 2 * r > DOUBLING_MODE_CAP or basis.N > DOUBLING_PARTICLE_CAP:
        raise ValueError(
            f"doubling oracle is gated to {DOUBLING_MODE_CAP} doubled modes and "
            f"{DOUBLING_PARTICLE_CAP} particles; got 2r={2 * r}, N={basis.N}"
        )
    if localizer.matrix.shape[0] != r:
        raise ValueError("localizer acts on a different number of modes")
    stacked = np.vstack([localizer.matrix, localizer.complement_right])
    gram_defect = np.linalg.norm(stacked.conj().T @ stacked - np.eye(r), ord=2)
    if gram_defect > 1e-10:
        raise ArithmeticError(f"doubling map failed the isometry check: {gram_defect:.3e}")

    doubled = enumerate_basis(2 * r, basis.N, basis.statistics)
    lifted = {}
    for (m, n), block in state.blocks.items():
        lift_m = sector_lift(stacked, m, basis.statistics,
                             tuples_out=doubled.sectors[m], tuples_in=basis.sectors[m])
        lift_n = sector_lift(stacked, n, basis.statistics,
                             tuples_out=doubled.sectors[n], tuples_in=basis.sectors[n])
        lifted[(m, n)] = lift_m @ block @ lift_n.conj().T

    out = {
        (p, q): np.zeros((basis.sector_dims[p], basis.sector_dims[q]), dtype=complex)
        for p in range(basis.N + 1)
        for q in range(basis.N + 1)
    }
    # Complement modes carry the larger indices, so splitting an ordered
    # tuple at the mode boundary reorders nothing and introduces no sign.
    for (m, n), block in lifted.items():
        rows = [_split_tuple(t, r) for t in doubled.sectors[m]]
        cols = [_split_tuple(t, r) for t in doubled.sectors[n]]
        for i, (row_kept, row_traced) in enumerate(rows):
            for j, (col_kept, col_traced) in enumerate(cols):
                if row_traced != col_traced:
                    continue
                value = block[i, j]
                if value == 0.0:
                    continue
                p, q = len(row_kept), len(col_kept)
                out[(p, q)][basis.local_index(p, row_kept), basis.local_index(q, col_kept)] += value
    out = {key: blk for key, blk in out.items() if np.any(blk)}
    if not out:
        out = {(0, 0): np.ones((1, 1), dtype=complex)}
    return MixedState(basis, out)


def _split_tuple(occ, r):
    kept = tuple(k for k in occ if k < r)
    traced = tuple(k - r for k in occ if k >= r)
    return kept, traced


def localize_nbody(basis: FockBasis, psi: np.ndarray,
                   localizer: LocalizationOperator) -> LocalizedDecomposition:
    """Decompose a pure N-particle state by particle count under the localizer.

    The sector-k block is the binomially weighted partial trace of the
    tensor representative with B on the first k slots and the complement
    sqrt(1 - B*B) on the rest.  Works directly in the r^N tensor space, so
    it is restricted to small r^N.
    """
    r = basis.r
    n = basis.N
    psi = np.asarray(psi, dtype=complex)
    if psi.shape == (basis.dim,):
        top = basis.sector_slice(n)
        rest = np.concatenate([psi[:top.start], psi[top.stop:]])
        if np.linalg.norm(rest) > 1e-12:
            raise ValueError("state has support outside the top particle sector")
        psi = psi[top]
    elif psi.shape != (basis.sector_dims[n],):
        raise ValueError("expected a top-sector or full-length coefficient vector")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"state vector has norm {norm!r}, expected 1")
    if r**n > 65536:
        raise ValueError("tensor route needs r^N <= 65536")
    if localizer.matrix.shape[0] != r:
        raise ValueError("localizer acts on a different number of modes")

    kept = localizer.matrix
    lost = localizer.complement_right
    tensor = embed_sector_vectors(psi[:, None], r, n, basis.statistics,
                                  tuples=basis.sectors[n])[:, 0]
    blocks = {}
    weights = np.zeros(n + 1)
    for k in range(n + 1):
        slot_maps = [kept] * k + [lost] * (n - k)
        w = _apply_slotwise(tensor, r, slot_maps)
        w2 = w.reshape(r**k, r ** (n - k))
        reduced = project_sector_vectors(w2, r, k, basis.statistics,
                                         tuples=basis.sectors[k])
        block = math.comb(n, k) * (reduced @ reduced.conj().T)
        weights[k] = float(np.trace(block).real)
        if np.any(np.abs(block) > WEIGHT_CUTOFF):
            blocks[(k, k)] = block
    parent = pure_state(basis, _embed_top_sector(basis, psi))
    result = MixedState(basis, blocks)
    return LocalizedDecomposition(parent, localizer, result, weights)


def _apply_slotwise(tensor: np.ndarray, r: int, mats) -> np.ndarray:
    n = len(mats)
    w = tensor.reshape((r,) * n) if n else tensor.copy()
    for axis, mat in enumerate(mats):
        w = np.moveaxis(np.tensordot(mat, w, axes=(1, axis)), 0, axis)
    return w.reshape(-1)


def _embed_top_sector(basis: FockBasis, psi: np.ndarray) -> np.ndarray:
    full = np.zeros(basis.dim, dtype=complex)
    full[basis.sector_slice(basis.N)] = psi
    return full


def sector_weights(state: MixedState) -> np.ndarray:
    """Trace of each diagonal occupation block; the particle-count law."""
    weights = np.zeros(state.basis.N + 1)
    for k in range(state.basis.N + 1):
        block = state.blocks.get((k, k))
        if block is not None:
            weights[k] = float(np.trace(block).real)
    return weights


def trace_complementarity_check(basis: FockBasis, state,
                                localizer: LocalizationOperator) -> float:
    """Largest deviation from the weight swap between B and its complement.

    Localizing with sqrt(1 - B*B) must put into sector N - k exactly the
    weight that B puts into sector k.  Accepts a top-sector vector or a
    MixedState supported on the top sector.
    """
    complement = localizer.complement_localizer()
    if isinstance(state, MixedState):
        for (m, n) in state.blocks:
            if (m, n) != (basis.N, basis.N):
                raise ValueError("complementarity needs a state with a sharp particle number")
        w_kept = sector_weights(localize_via_formula(state, localizer))
        w_lost = sector_weights(localize_via_formula(state, complement))
    else:
        w_kept = localize_nbody(basis, state, localizer).sector_weights
        w_lost = localize_nbody(basis, state, complement).sector_weights
    return float(np.max(np.abs(w_kept - w_lost[::-1])))


def composition_check(state: MixedState, first: LocalizationOperator,
                      second: LocalizationOperator) -> float:
    """Largest block deviation between sequential and composed localization."""
    step = localize_via_formula(localize_via_formula(state, first), second)
    combined = localize_via_formula(state, LocalizationOperator(second.matrix @ first.matrix))
    worst = 0.0
    for key in set(step.blocks) | set(combined.blocks):
        a = step.blocks.get(key)
        b = combined.blocks.get(key)
        if a is None:
            worst = max(worst, float(np.max(np.abs(b))))
        elif b is None:
            worst = max(worst, float(np.max(np.abs(a))))
        else:
            worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


@dataclass(frozen=True)
class SectorRankCertificate:
    """Per-sector natural-component ranks of a localized fermionic state."""

    sector: int
    weights: tuple
    ranks: tuple
    bound: int

    @property
    def satisfied(self) -> bool:
        return all(rank <= self.bound for rank in self.ranks)


def finite_rank_localization_structure(basis: FockBasis, psi: np.ndarray,
                                       localizer: LocalizationOperator,
                                       threshold: float = RANK_THRESHOLD):
    """Certify the orbital ranks of each localized sector of a fermionic state.

    If the parent N-particle state lives on d natural orbitals, every
    normalized eigencomponent of the sector-k block lives on at most
    d - N + k orbitals.  Returns one certificate per sector with weight
    above the cutoff.
    """
    if basis.statistics != "fermion":
        raise ValueError("rank certificates are only defined for fermions")
    decomposition = localize_nbody(basis, psi, localizer)
    parent_dm = _one_body_matrix(decomposition.parent)
    parent_rank = int(np.sum(np.linalg.eigvalsh(parent_dm) > threshold * basis.N))
    certificates = []
    for k in range(basis.N + 1):
        block = decomposition.result.blocks.get((k, k))
        if block is None or k == 0:
            continue
        vals, vecs = np.linalg.eigh(block)
        weights, ranks = [], []
        for idx in range(len(vals) - 1, -1, -1):
            if vals[idx] <= WEIGHT_CUTOFF:
                break
            component = vecs[:, idx]
            component = component / np.linalg.norm(component)
            comp_state = MixedState(
                basis, {(k, k): np.outer(component, component.conj())}, validate=False
            )
            dm = _one_body_matrix(comp_state)
            ranks.append(int(np.sum(np.linalg.eigvalsh(dm) > threshold * k)))
            weights.append(float(vals[idx]))
        bound = parent_rank - basis.N + k
        certificates.append(SectorRankCertificate(k, tuple(weights), tuple(ranks), bound))
    return certificates


def _one_body_matrix(state: MixedState) -> np.ndarray:
    from .states import density_matrix

    return density_matrix(state, 1, 1).matrix


def localized_hartree_blocks(basis: FockBasis, orbital: np.ndarray,
                             localizer: LocalizationOperator) -> dict:
    """Closed-form localization of the bosonic product state over one orbital.

    Sector k carries binomial weight C(N, k) (1 - |B phi|^2)^(N-k) on the
    pure k-fold product of the cut orbital.
    """
    if basis.statistics != "boson":
        raise ValueError("the product closed form is bosonic")
    n = basis.N
    phi = np.asarray(orbital, dtype=complex)
    if abs(np.linalg.norm(phi) - 1.0) > 1e-10:
        raise ValueError("orbital must be normalized")
    cut = localizer.matrix @ phi
    survival = float(np.vdot(cut, cut).real)
    blocks = {}
    for k in range(n + 1):
        weight = math.comb(n, k) * (1.0 - survival) ** (n - k)
        column = sector_lift(cut[:, None], k, "boson",
                             tuples_out=basis.sectors[k])[:, 0]
        block = weight * np.outer(column, column.conj())
        if np.any(np.abs(block) > WEIGHT_CUTOFF):
            blocks[(k, k)] = block
    return blocks


def localized_slater_blocks(basis: FockBasis, orbitals: np.ndarray,
                            localizer: LocalizationOperator) -> dict:
    """Closed-form localization of a fermionic Slater state.

    The orbital frame is first rotated so the cut overlaps <B phi_i, B phi_j>
    are diagonal (the rotation leaves the Slater state fixed up to phase).
    Sector k is then the sum over k-subsets I of the wedge of the cut
    orbitals in I, weighted by the survival complements of the rest.
    """
    if basis.statistics != "fermion":
        raise ValueError("the determinant closed form is fermionic")
    n = basis.N
    frame = np.asarray(orbitals, dtype=complex)
    if frame.shape != (basis.r, n):
        raise ValueError("expected one column per particle")
    gram = frame.conj().T @ frame
    if np.linalg.norm(gram - np.eye(n), ord=2) > 1e-10:
        raise ValueError("orbitals must be orthonormal")
    cut = localizer.matrix @ frame
    overlap = cut.conj().T @ cut
    lam, rotation = np.linalg.eigh(overlap)
    frame = frame @ rotation
    cut = cut @ rotation
    blocks = {}
    for k in range(n + 1):
        block = np.zeros((basis.sector_dims[k], basis.sector_dims[k]), dtype=complex)
        for subset in itertools.combinations(range(n), k):
            complement_weight = 1.0
            for alpha in range(n):
                if alpha not in subset:
                    complement_weight *= max(0.0, 1.0 - float(lam[alpha]))
            if complement_weight <= WEIGHT_CUTOFF:
                continue
            wedge_column = sector_lift(cut[:, list(subset)], k, "fermion",
                                       tuples_out=basis.sectors[k])[:, 0] if k else np.ones(1)
            block += complement_weight * np.outer(wedge_column, wedge_column.conj())
        if np.any(np.abs(block) > WEIGHT_CUTOFF):
            blocks[(k, k)] = block
    return blocks


def decomposition_csv(decomposition: LocalizedDecomposition,
                      certificates=None) -> str:
    """Render sector weights (and rank certificates, if given) as CSV text."""
    by_sector = {}
    if certificates:
        by_sector = {cert.sector: cert for cert in certificates}
    lines = ["sector,weight,certified_rank"]
    for k, weight in enumerate(decomposition.sector_weights):
        cert = by_sector.get(k)
        rank = max(cert.ranks) if cert and cert.ranks else ""
        lines.append("%d,%.17g,%s" % (k, weight, rank))
    return "\n".join(lines) + "\n"
