"""Mixed states on a truncated Fock space and their reduced density matrices.

A state is stored as its sector blocks G_mn (the compressions of the full
Fock-space matrix between particle-number sectors). The (p, q) density
matrices are produced by two independent routes on every call:

  (a) ladder-operator traces: entry (T, S) is tr(G a†_{s_1}..a†_{s_q}
      a_{t_p}..a_{t_1}) divided by the multiset normalizations of T and S,
      evaluated through an eigendecomposition of the state;
  (b) weighted partial traces of the blocks G_{p+j, q+j}, contracted directly
      in the occupation bases.

The two agree to 1e-10 or density_matrix raises; this cross-check is part of
the production path, not only of the tests.
"""

from __future__ import annotations

import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .fock import FockBasis, enumerate_basis, multiplicity_factorial, sector_lift
from .onebody import OneBodySpace

__all__ = [
    "MixedState",
    "DensityMatrix",
    "pure_state",
    "mixed_from_blocks",
    "density_matrix",
    "density_matrix_table",
    "blocks_from_density_matrices",
    "is_representable",
    "lowdin_support",
    "natural_orbitals",
    "natural_orbital_expansion_residual",
    "density_profile",
    "average_particle_number",
    "dm_contract",
    "trace_norm_bound",
    "state_to_text",
    "state_from_text",
    "dm_table_csv",
]

PSD_TOL = 1e-10
TRACE_TOL = 1e-12
DUAL_ROUTE_TOL = 1e-10
RANK_THRESHOLD = 1e-10


# ---------------------------------------------------------------------------
# the state type
# ---------------------------------------------------------------------------

class MixedState:
    """Positive, trace-one operator on the truncated Fock space, blockwise.

    ``blocks[(m, n)]`` is the compression between sectors n and m. Validation
    at construction: blockwise Hermiticity, positive semidefiniteness of the
    assembled matrix within 1e-10, and unit trace within 1e-12. Pure states
    built from a normalized vector skip the eigenvalue check (it holds by
    construction) and remember the vector.
    """

    def __init__(self, basis: FockBasis, blocks: dict, pure_vector=None,
                 validate: bool = True):
        self.basis = basis
        clean = {}
        for (m, n), mat in blocks.items():
            mat = np.asarray(mat, dtype=complex)
            expected = (len(basis.sectors[m]), len(basis.sectors[n]))
            if mat.shape != expected:
                raise ValueError(f"block ({m},{n}) must be {expected}, got {mat.shape}")
            if np.any(mat):
                mat.setflags(write=False)
                clean[(m, n)] = mat
        self.blocks = clean
        self.pure_vector = None if pure_vector is None else np.asarray(pure_vector,
                                                                       dtype=complex)
        if validate:
            self._validate()

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_vector(basis: FockBasis, psi: np.ndarray) -> "MixedState":
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        if psi.size != basis.dim:
            raise ValueError(f"vector must have {basis.dim} entries, got {psi.size}")
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"vector norm is {norm:.12g}, expected 1 within 1e-10")
        blocks = {}
        for m in range(basis.N + 1):
            pm = psi[basis.sector_slice(m)]
            if not np.any(pm):
                continue
            for n in range(basis.N + 1):
                pn = psi[basis.sector_slice(n)]
                if np.any(pn):
                    blocks[(m, n)] = np.outer(pm, pn.conj())
        state = MixedState(basis, blocks, pure_vector=psi, validate=False)
        return state

    # -- bookkeeping -------------------------------------------------------

    def block(self, m: int, n: int) -> np.ndarray:
        got = self.blocks.get((m, n))
        if got is not None:
            return got
        return np.zeros((len(self.basis.sectors[m]), len(self.basis.sectors[n])),
                        dtype=complex)

    def assembled(self) -> np.ndarray:
        out = np.zeros((self.basis.dim, self.basis.dim), dtype=complex)
        for (m, n), mat in self.blocks.items():
            out[self.basis.sector_slice(m), self.basis.sector_slice(n)] = mat
        return out

    @property
    def trace(self) -> float:
        return float(sum(np.trace(self.block(m, m)).real
                         for m in range(self.basis.N + 1)))

    @property
    def is_number_conserving(self) -> bool:
        return all(m == n for (m, n) in self.blocks)

    def _validate(self):
        for (m, n), mat in self.blocks.items():
            other = self.block(n, m)
            if np.max(np.abs(mat - other.conj().T)) > 1e-10:
                raise ValueError(f"blocks ({m},{n}) and ({n},{m}) are not adjoint")
        if abs(self.trace - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {self.trace:.15g}, expected 1 within {TRACE_TOL}")
        if self.is_number_conserving:
            small = min((np.linalg.eigvalsh(mat).min()
                         for (m, _), mat in self.blocks.items()), default=0.0)
        else:
            small = float(np.linalg.eigvalsh(self.assembled()).min())
        if small < -PSD_TOL:
            raise ValueError(f"state has eigenvalue {small:.3e} below -{PSD_TOL}")

    def eigendecomposition(self):
        """(weights, vectors) with weights > 1e-14, vectors full Fock length.

        Pure states return their stored vector; number-conserving states are
        decomposed sector by sector.
        """
        if self.pure_vector is not None:
            return np.array([1.0]), [self.pure_vector]
        weights, vectors = [], []
        if self.is_number_conserving:
            for (m, _), mat in sorted(self.blocks.items()):
                vals, vecs = np.linalg.eigh(mat)
                for w, v in zip(vals, vecs.T):
                    if w > 1e-14:
                        full = np.zeros(self.basis.dim, dtype=complex)
                        full[self.basis.sector_slice(m)] = v
                        weights.append(float(w))
                        vectors.append(full)
        else:
            vals, vecs = np.linalg.eigh(self.assembled())
            for w, v in zip(vals, vecs.T):
                if w > 1e-14:
                    weights.append(float(w))
                    vectors.append(v)
        return np.array(weights), vectors


def pure_state(basis: FockBasis, psi) -> MixedState:
    """Projector onto a normalized Fock vector, as sector blocks."""
    return MixedState.from_vector(basis, psi)


def mixed_from_blocks(basis: FockBasis, blocks: dict) -> MixedState:
    return MixedState(basis, blocks)


@dataclass(frozen=True)
class DensityMatrix:
    """One reduced density matrix: sector-p rows, sector-q columns."""

    p: int
    q: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if self.p == self.q and m.size:
            if np.max(np.abs(m - m.conj().T)) > 1e-9 * max(1.0, np.max(np.abs(m))):
                raise ValueError(f"diagonal density matrix ({self.p},{self.p}) "
                                 "is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


def trace_norm_bound(p: int, q: int, N: int) -> float:
    """Universal trace-norm bound sum_j sqrt(C(p+j,p) C(q+j,q))."""
    return float(sum(math.sqrt(math.comb(p + j, p) * math.comb(q + j, q))
                     for j in range(min(N - p, N - q) + 1)))


# ---------------------------------------------------------------------------
# route (b): occupation-basis partial traces
# ---------------------------------------------------------------------------

def _riffle_sign(left: tuple, tail: tuple) -> float:
    """Sign of the permutation sorting the concatenation of two sorted
    disjoint tuples (fermionic tail contraction)."""
    inv = 0
    for z in tail:
        inv += sum(1 for a in left if a > z)
    return -1.0 if inv % 2 else 1.0


def _merge(left: tuple, tail: tuple) -> tuple:
    return tuple(sorted(left + tail))


def dm_contract(block: np.ndarray, r: int, statistics: str,
                m: int, n: int, p: int, q: int) -> np.ndarray:
    """The (p, q) density matrix of an operator supported on sectors (m, n).

    Requires m - p = n - q = j >= 0. Includes the sqrt(C(m,p) C(n,q))
    partial-trace prefactor; after expressing everything in occupation bases
    that prefactor collapses into the multiset factors below, with the sum
    running over unordered j-particle tails Z:

        fermions: sum_Z sign(A,Z) sign(B,Z) block[A+Z, B+Z]
        bosons:   sum_Z block[A+Z, B+Z]
                  * sqrt(mult(A+Z)! mult(B+Z)!) / (mult(Z)! sqrt(mult(A)! mult(B)!))
    """
    j = m - p
    if j != n - q or j < 0:
        raise ValueError(f"cannot contract block ({m},{n}) to ({p},{q})")
    fermion = statistics == "fermion"
    combine = itertools.combinations if fermion else itertools.combinations_with_replacement
    rows = tuple(combine(range(r), p))
    cols = tuple(combine(range(r), q))
    row_index = {t: k for k, t in enumerate(tuple(combine(range(r), m)))}
    col_index = {t: k for k, t in enumerate(tuple(combine(range(r), n)))}
    out = np.zeros((len(rows), len(cols)), dtype=complex)
    tails = tuple(combine(range(r), j))
    for a, A in enumerate(rows):
        set_a = set(A)
        for z in tails:
            if fermion and set_a & set(z):
                continue
            T = _merge(A, z)
            t_idx = row_index[T]
            if fermion:
                ca = _riffle_sign(A, z)
            else:
                ca = math.sqrt(multiplicity_factorial(T)
                               / multiplicity_factorial(A)) / multiplicity_factorial(z)
            for b, B in enumerate(cols):
                if fermion and set(B) & set(z):
                    continue
                S = _merge(B, z)
                if fermion:
                    cb = _riffle_sign(B, z)
                else:
                    cb = math.sqrt(multiplicity_factorial(S)
                                   / multiplicity_factorial(B))
                out[a, b] += ca * cb * block[t_idx, col_index[S]]
    return out


def _dm_route_blocks(state: MixedState, p: int, q: int) -> np.ndarray:
    basis = state.basis
    total = None
    for j in range(min(basis.N - p, basis.N - q) + 1):
        block = state.blocks.get((p + j, q + j))
        if block is None:
            continue
        term = dm_contract(block, basis.r, basis.statistics, p + j, q + j, p, q)
        total = term if total is None else total + term
    if total is None:
        total = np.zeros((len(basis.sectors[p]), len(basis.sectors[q])), dtype=complex)
    return total


# ---------------------------------------------------------------------------
# route (a): ladder-operator traces
# ---------------------------------------------------------------------------

def _annihilate_mode(basis: FockBasis, k: int, vec: np.ndarray,
                     max_sector: int) -> np.ndarray:
    """Apply a_k to a Fock vector known to vanish above ``max_sector``.

    Returns a vector truncated to sectors 0..max_sector-1.
    """
    out = np.zeros(basis.offsets[max_sector], dtype=complex)
    fermion = basis.statistics == "fermion"
    for n in range(1, max_sector + 1):
        src_off = basis.offsets[n]
        dst_index = basis._index[n - 1]
        dst_off = basis.offsets[n - 1]
        for s, occ in enumerate(basis.sectors[n]):
            c = vec[src_off + s] if src_off + s < vec.size else 0.0
            if c == 0 or k not in occ:
                continue
            first = occ.index(k)
            reduced = occ[:first] + occ[first + 1:]
            if fermion:
                amp = (-1.0) ** first
            else:
                amp = math.sqrt(occ.count(k))
            out[dst_off + dst_index[reduced]] += amp * c
    return out


def _annihilation_tree(basis: FockBasis, vec: np.ndarray) -> list:
    """u_X = a_{x_last} ... a_{x_first} vec for every occupation tuple X.

    Returned as one dict per tuple size; entries are vectors truncated to
    their maximal possible support (sectors 0..N-|X|).
    """
    fermion = basis.statistics == "fermion"
    levels = [{(): np.asarray(vec, dtype=complex)}]
    for size in range(1, basis.N + 1):
        prev = levels[size - 1]
        nxt = {}
        for parent, u in prev.items():
            start = (parent[-1] + 1 if fermion else parent[-1]) if parent else 0
            for k in range(start, basis.r):
                nxt[parent + (k,)] = _annihilate_mode(basis, k, u,
                                                      basis.N - size + 1)
        levels.append(nxt)
    return levels


def _dm_route_ladder(state: MixedState, p: int, q: int) -> np.ndarray:
    basis = state.basis
    rows = basis.sectors[p]
    cols = basis.sectors[q]
    out = np.zeros((len(rows), len(cols)), dtype=complex)
    weights, vectors = state.eigendecomposition()
    keep = min(basis.offsets[basis.N - p + 1], basis.offsets[basis.N - q + 1])
    for w, v in zip(weights, vectors):
        tree = _annihilation_tree(basis, v)
        U_p = np.stack([tree[p][occ][:keep] for occ in rows], axis=1)
        U_q = np.stack([tree[q][occ][:keep] for occ in cols], axis=1)
        out += w * (U_q.conj().T @ U_p).T
    norm_rows = np.array([math.sqrt(multiplicity_factorial(t)) for t in rows])
    norm_cols = np.array([math.sqrt(multiplicity_factorial(t)) for t in cols])
    return out / np.outer(norm_rows, norm_cols)


def density_matrix(state: MixedState, p: int, q: int) -> DensityMatrix:
    """Reduced (p, q) density matrix, dual-route checked to 1e-10."""
    basis = state.basis
    if not (0 <= p <= basis.N and 0 <= q <= basis.N):
        raise ValueError(f"sector indices ({p},{q}) outside 0..{basis.N}")
    via_blocks = _dm_route_blocks(state, p, q)
    via_ladder = _dm_route_ladder(state, p, q)
    gap = np.max(np.abs(via_blocks - via_ladder)) if via_blocks.size else 0.0
    if gap > DUAL_ROUTE_TOL:
        raise ArithmeticError(
            f"density matrix ({p},{q}): partial-trace and ladder routes "
            f"disagree by {gap:.3e}")
    return DensityMatrix(p=p, q=q, matrix=via_blocks)


def density_matrix_table(state: MixedState) -> dict:
    """All (p, q) density matrices, keyed by (p, q)."""
    N = state.basis.N
    return {(p, q): density_matrix(state, p, q).matrix
            for p in range(N + 1) for q in range(N + 1)}


# ---------------------------------------------------------------------------
# inverse map and representability
# ---------------------------------------------------------------------------

def blocks_from_density_matrices(dm_table: dict, basis: FockBasis) -> MixedState:
    """Rebuild the sector blocks from a complete (p, q) density-matrix table.

    G_mn = [dm]^{(m,n)} + sum_{j>=1} (-1)^j [dm^{(m+j,n+j)}]^{(m,n)}, the
    alternating inversion of the triangular partial-trace system.
    """
    for p in range(basis.N + 1):
        for q in range(basis.N + 1):
            if (p, q) not in dm_table:
                raise ValueError(f"density-matrix table is missing entry ({p},{q})")
    blocks = {}
    for m in range(basis.N + 1):
        for n in range(basis.N + 1):
            total = np.zeros((len(basis.sectors[m]), len(basis.sectors[n])),
                             dtype=complex)
            for j in range(min(basis.N - m, basis.N - n) + 1):
                dm = np.asarray(dm_table[(m + j, n + j)], dtype=complex)
                term = dm_contract(dm, basis.r, basis.statistics,
                                   m + j, n + j, m, n)
                total += ((-1.0) ** j) * term
            blocks[(m, n)] = total
    return MixedState(basis, blocks)


def is_representable(diagonal_table, basis: FockBasis):
    """Decide whether diagonal density matrices come from an actual state.

    ``diagonal_table`` holds one Hermitian matrix per sector 0..N (the 0-th
    may be a scalar). Returns (True, witness_state) when the alternating
    partial-trace sums are all positive semidefinite within 1e-10 and the
    0-th entry is 1; otherwise (False, first_violated_sector).
    """
    if len(diagonal_table) != basis.N + 1:
        raise ValueError(f"need {basis.N + 1} diagonal matrices, got "
                         f"{len(diagonal_table)}")
    table = []
    for m, entry in enumerate(diagonal_table):
        mat = np.atleast_2d(np.asarray(entry, dtype=complex))
        want = len(basis.sectors[m])
        if mat.shape != (want, want):
            raise ValueError(f"entry {m} must be {want} x {want}, got {mat.shape}")
        if np.max(np.abs(mat - mat.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(mat))):
            raise ValueError(f"entry {m} is not Hermitian")
        table.append(mat)
    if abs(table[0][0, 0] - 1.0) > 1e-10:
        return False, 0
    blocks = {}
    for m in range(basis.N + 1):
        total = table[m].copy()
        for j in range(1, basis.N - m + 1):
            term = dm_contract(table[m + j], basis.r, basis.statistics,
                               m + j, m + j, m, m)
            total += ((-1.0) ** j) * term
        if np.linalg.eigvalsh(total).min() < -PSD_TOL:
            return False, m
        blocks[(m, m)] = total
    return True, MixedState(basis, blocks)


# ---------------------------------------------------------------------------
# support, natural orbitals, densities
# ---------------------------------------------------------------------------

def lowdin_support(state: MixedState, threshold: float = RANK_THRESHOLD):
    """Spectral projector of the one-body density matrix and its rank.

    The projector P satisfies: localizing the state by P changes nothing
    (checked to 1e-8), which is the operator version of `the state lives on
    the range of P`.
    """
    dm1 = density_matrix(state, 1, 1).matrix
    vals, vecs = np.linalg.eigh(dm1)
    kept = vals > threshold
    P = (vecs[:, kept]) @ (vecs[:, kept]).conj().T
    rank = int(np.sum(kept))
    from .localization import localize_via_formula
    from .onebody import LocalizationOperator
    localized = localize_via_formula(state, LocalizationOperator(P, label="support"))
    for m in range(state.basis.N + 1):
        for n in range(state.basis.N + 1):
            gap = np.max(np.abs(localized.block(m, n) - state.block(m, n)))
            if gap > 1e-8:
                raise ArithmeticError(
                    f"support projector fails to reproduce the state on block "
                    f"({m},{n}): deviation {gap:.3e}")
    return P, rank


def natural_orbitals(state: MixedState):
    """Occupation numbers (descending) and orbitals of the one-body matrix."""
    dm1 = density_matrix(state, 1, 1).matrix
    vals, vecs = np.linalg.eigh(dm1)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def natural_orbital_expansion_residual(state: MixedState,
                                       threshold: float = RANK_THRESHOLD) -> float:
    """Residual of re-expanding a pure N-body state in its natural orbitals.

    A finite-rank pure state is a combination of products of its natural
    orbitals; projecting onto that product basis and reconstructing must
    reproduce the vector.
    """
    basis = state.basis
    if state.pure_vector is None:
        raise ValueError("expansion check needs a pure state")
    psi = state.pure_vector
    body = psi[basis.sector_slice(basis.N)]
    if abs(np.linalg.norm(body) - 1.0) > 1e-10:
        raise ValueError("expansion check needs a pure N-body state")
    occ, orbitals = natural_orbitals(state)
    kept = orbitals[:, occ > threshold]
    lifted = sector_lift(kept, basis.N, basis.statistics,
                         tuples_out=basis.sectors[basis.N])
    coeffs = lifted.conj().T @ body
    return float(np.linalg.norm(lifted @ coeffs - body))


def density_profile(state: MixedState, space: OneBodySpace) -> np.ndarray:
    """Per-site particle density: diagonal of the one-body matrix over h^d."""
    if space.kind != "position-lattice":
        raise ValueError("density profiles need a position-lattice basis")
    if space.n_modes != state.basis.r:
        raise ValueError(f"lattice has {space.n_modes} sites, state has "
                         f"{state.basis.r} modes")
    diag = np.diag(density_matrix(state, 1, 1).matrix).real
    if diag.min() < -1e-12:
        raise ArithmeticError(f"density has negative entry {diag.min():.3e}")
    return np.clip(diag, 0.0, None) / space.volume_element


def average_particle_number(state: MixedState) -> float:
    """tr of the one-body density matrix."""
    return float(density_matrix(state, 1, 1).trace.real)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def state_to_text(state: MixedState) -> str:
    """Sector-block text format: header, then one block per stanza."""
    basis = state.basis
    out = io.StringIO()
    out.write(f"state r={basis.r} N={basis.N} statistics={basis.statistics}\n")
    for (m, n) in sorted(state.blocks):
        mat = state.blocks[(m, n)]
        out.write(f"block {m} {n}\n")
        for row in mat:
            out.write(" ".join(f"{v.real:.17g} {v.imag:.17g}" for v in row))
            out.write("\n")
    out.write("end\n")
    return out.getvalue()


def state_from_text(text: str) -> MixedState:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "state":
        raise ValueError("not a state block file")
    fields = dict(part.split("=") for part in head[1:])
    basis = enumerate_basis(int(fields["r"]), int(fields["N"]), fields["statistics"])
    blocks = {}
    k = 1
    while k < len(lines) and lines[k] != "end":
        tag, m, n = lines[k].split()
        if tag != "block":
            raise ValueError(f"expected block header, got {lines[k]!r}")
        m, n = int(m), int(n)
        rows = len(basis.sectors[m])
        mat = np.zeros((rows, len(basis.sectors[n])), dtype=complex)
        for a in range(rows):
            vals = [float(x) for x in lines[k + 1 + a].split()]
            mat[a] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
        blocks[(m, n)] = mat
        k += 1 + rows
    return MixedState(basis, blocks)


def dm_table_csv(state: MixedState) -> str:
    """CSV of every (p, q) density matrix: p,q,row,col,re,im."""
    out = ["p,q,row,col,re,im"]
    for (p, q), mat in sorted(density_matrix_table(state).items()):
        for a in range(mat.shape[0]):
            for b in range(mat.shape[1]):
                v = mat[a, b]
                out.append(f"{p},{q},{a},{b},{v.real:.17g},{v.imag:.17g}")
    return "\n".join(out) + "\n"
