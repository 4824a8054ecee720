"""Truncated Fock spaces over a finite mode basis.

The space kept in memory is the direct sum of the 0..N particle sectors over
r orthonormal modes. Fermionic sector-n basis states are labelled by strictly
increasing mode tuples (wedge products), bosonic ones by non-decreasing mode
tuples (normalized symmetric products). Sectors are ordered by particle
number and lexicographically inside, so index 0 is always the vacuum.

Ladder operators, second quantization and basis lifts are all built from the
same two elementary rules on occupation tuples:

    fermions: adding mode k to S costs the sign (-1)^(number of modes in S
    below k); removing it costs the same sign.
    bosons:   adding mode k costs sqrt(n_k + 1); removing it costs sqrt(n_k).
"""

from __future__ import annotations

import bisect
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .onebody import OneBodyOperator, TwoBodyKernel, as_matrix

__all__ = [
    "FockBasis",
    "FockOperator",
    "enumerate_basis",
    "creation",
    "annihilation",
    "car_ccr_residual",
    "second_quantize_onebody",
    "second_quantize_twobody",
    "number_operator",
    "assemble_hamiltonian",
    "wedge",
    "weyl_coherent_state",
    "vacuum_state",
    "basis_state",
    "sector_lift",
    "fock_lift",
    "tensor_embedding",
    "permanent",
    "sector_coo_text",
]

DENSE_DIM_CAP = 5000


# ---------------------------------------------------------------------------
# basis enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FockBasis:
    """Ordered basis of the 0..N particle sectors over r modes."""

    r: int
    N: int
    statistics: str
    sectors: tuple = field(repr=False)
    offsets: tuple = field(repr=False)

    def __post_init__(self):
        index = tuple({t: k for k, t in enumerate(sec)} for sec in self.sectors)
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return self.offsets[-1]

    @property
    def sector_dims(self) -> tuple:
        return tuple(len(sec) for sec in self.sectors)

    def sector_slice(self, n: int) -> slice:
        return slice(self.offsets[n], self.offsets[n + 1])

    def tuples(self, n: int):
        return self.sectors[n]

    def local_index(self, n: int, occ: tuple) -> int:
        return self._index[n][occ]

    def global_index(self, n: int, occ: tuple) -> int:
        return self.offsets[n] + self._index[n][occ]

    def sector_of(self, global_index: int) -> int:
        return bisect.bisect_right(self.offsets, global_index) - 1


def enumerate_basis(r: int, N: int, statistics: str) -> FockBasis:
    """List every occupation tuple, sectors ascending, lexicographic inside.

    Fermions require N <= r (no antisymmetric n-body states beyond n = r).
    """
    if statistics not in ("fermion", "boson"):
        raise ValueError(f"unknown statistics {statistics!r}")
    if r < 1:
        raise ValueError(f"need at least one mode, got r={r}")
    if N < 0:
        raise ValueError(f"particle cutoff must be nonnegative, got {N}")
    if statistics == "fermion" and N > r:
        raise ValueError(f"fermionic cutoff N={N} exceeds mode count r={r}")
    combine = (itertools.combinations if statistics == "fermion"
               else itertools.combinations_with_replacement)
    sectors = tuple(tuple(combine(range(r), n)) for n in range(N + 1))
    offsets = (0,) + tuple(itertools.accumulate(len(s) for s in sectors))
    return FockBasis(r=r, N=N, statistics=statistics, sectors=sectors,
                     offsets=offsets)


def multiplicity_factorial(occ: tuple) -> int:
    """prod_k (n_k!) for the multiset occ; 1 on fermionic (distinct) tuples."""
    out = 1
    for c in Counter(occ).values():
        out *= math.factorial(c)
    return out


# ---------------------------------------------------------------------------
# block-sparse operators
# ---------------------------------------------------------------------------

class FockOperator:
    """Linear map on the truncated Fock space, stored sector-block-wise.

    ``blocks`` maps (out_sector, in_sector) to a dense matrix. Most operators
    here are number-conserving (all keys (n, n)) or ladder-like (keys
    (n+1, n) or (n, n+1)); the tag records which.
    """

    def __init__(self, basis: FockBasis, blocks: dict):
        self.basis = basis
        clean = {}
        for (m, n), mat in blocks.items():
            mat = np.asarray(mat, dtype=complex)
            expected = (len(basis.sectors[m]), len(basis.sectors[n]))
            if mat.shape != expected:
                raise ValueError(
                    f"block ({m},{n}) must be {expected}, got {mat.shape}")
            if np.any(mat):
                mat.setflags(write=False)
                clean[(m, n)] = mat
        self.blocks = clean
        shifts = {m - n for m, n in clean}
        if not shifts or shifts == {0}:
            self.sector_structure = "number-conserving"
        elif shifts == {1}:
            self.sector_structure = "raising"
        elif shifts == {-1}:
            self.sector_structure = "lowering"
        else:
            self.sector_structure = "general"

    def block(self, m: int, n: int) -> np.ndarray:
        got = self.blocks.get((m, n))
        if got is not None:
            return got
        return np.zeros((len(self.basis.sectors[m]), len(self.basis.sectors[n])),
                        dtype=complex)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=complex)
        out = np.zeros(self.basis.dim, dtype=complex)
        for (m, n), mat in self.blocks.items():
            out[self.basis.sector_slice(m)] += mat @ vec[self.basis.sector_slice(n)]
        return out

    def to_dense(self) -> np.ndarray:
        if self.basis.dim > DENSE_DIM_CAP:
            raise ValueError(
                f"Fock dimension {self.basis.dim} exceeds the dense cap "
                f"{DENSE_DIM_CAP}; work with the sector blocks instead")
        out = np.zeros((self.basis.dim, self.basis.dim), dtype=complex)
        for (m, n), mat in self.blocks.items():
            out[self.basis.sector_slice(m), self.basis.sector_slice(n)] = mat
        return out

    def adjoint(self) -> "FockOperator":
        return FockOperator(self.basis,
                            {(n, m): mat.conj().T for (m, n), mat in self.blocks.items()})

    def expectation(self, vec: np.ndarray) -> complex:
        return complex(np.vdot(vec, self.apply(vec)))

    def __add__(self, other: "FockOperator") -> "FockOperator":
        self._check_same_basis(other)
        keys = set(self.blocks) | set(other.blocks)
        return FockOperator(self.basis,
                            {k: self.block(*k) + other.block(*k) for k in keys})

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "FockOperator":
        return FockOperator(self.basis,
                            {k: scalar * m for k, m in self.blocks.items()})

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        self._check_same_basis(other)
        out: dict = {}
        for (m, n), a in self.blocks.items():
            for (n2, k), b in other.blocks.items():
                if n == n2:
                    key = (m, k)
                    prod = a @ b
                    out[key] = out.get(key, 0) + prod
        return FockOperator(self.basis, out)

    def _check_same_basis(self, other):
        if other.basis is not self.basis and (
                other.basis.r != self.basis.r
                or other.basis.N != self.basis.N
                or other.basis.statistics != self.basis.statistics):
            raise ValueError("operators live on different Fock bases")


def zero_operator(basis: FockBasis) -> FockOperator:
    return FockOperator(basis, {})


def vacuum_state(basis: FockBasis) -> np.ndarray:
    vec = np.zeros(basis.dim, dtype=complex)
    vec[0] = 1.0
    return vec


def basis_state(basis: FockBasis, occ: tuple) -> np.ndarray:
    """Unit vector of one occupation tuple (sorted mode indices)."""
    occ = tuple(sorted(occ))
    vec = np.zeros(basis.dim, dtype=complex)
    vec[basis.global_index(len(occ), occ)] = 1.0
    return vec


# ---------------------------------------------------------------------------
# ladder operators
# ---------------------------------------------------------------------------

def _creation_blocks(basis: FockBasis, f: np.ndarray) -> dict:
    blocks = {}
    fermion = basis.statistics == "fermion"
    support = [k for k in range(basis.r) if f[k] != 0]
    for n in range(basis.N):
        src = basis.sectors[n]
        dst_index = basis._index[n + 1]
        mat = np.zeros((len(basis.sectors[n + 1]), len(src)), dtype=complex)
        for s, occ in enumerate(src):
            for k in support:
                if fermion:
                    pos = bisect.bisect_left(occ, k)
                    if pos < len(occ) and occ[pos] == k:
                        continue  # Pauli
                    coeff = f[k] * (-1.0) ** pos
                else:
                    pos = bisect.bisect_left(occ, k)
                    coeff = f[k] * math.sqrt(occ.count(k) + 1)
                target = occ[:pos] + (k,) + occ[pos:]
                mat[dst_index[target], s] += coeff
        blocks[(n + 1, n)] = mat
    return blocks


def creation(basis: FockBasis, f) -> FockOperator:
    """a†(f): linear in f, maps sector n to n+1, kills the top sector."""
    f = np.asarray(f, dtype=complex).reshape(-1)
    if f.size != basis.r:
        raise ValueError(f"one-body vector must have {basis.r} components, got {f.size}")
    return FockOperator(basis, _creation_blocks(basis, f))


def annihilation(basis: FockBasis, f) -> FockOperator:
    """a(f) = a†(f)* on the truncated space; antilinear in f."""
    return creation(basis, f).adjoint()


def car_ccr_residual(basis: FockBasis, f, g) -> float:
    """Deviation of the ladder algebra from the canonical relations.

    For fermions the three anticommutators {a(g),a†(f)} - <g,f>,
    {a†(f),a†(g)} and {a(f),a(g)} are measured; for bosons the
    commutators. The pure creation/annihilation parts hold on the whole
    truncated space. The mixed part cannot hold on the top sector whenever
    the sector above it was cut (a† maps it to zero there), so it is
    evaluated on the embedded 0..N-1 part; a fermionic basis with N = r has
    nothing cut and is checked everywhere.
    """
    f = np.asarray(f, dtype=complex).reshape(-1)
    g = np.asarray(g, dtype=complex).reshape(-1)
    cf, cg = creation(basis, f), creation(basis, g)
    af, ag = cf.adjoint(), cg.adjoint()
    sign = 1.0 if basis.statistics == "fermion" else -1.0
    # mixed: a(g) a†(f) +/- a†(f) a(g) = <g,f> 1
    mixed = (ag @ cf) + sign * (cf @ ag)
    pure_c = (cf @ cg) + sign * (cg @ cf)
    pure_a = (af @ ag) + sign * (ag @ af)
    inner = complex(np.vdot(g, f))
    top_is_cut = not (basis.statistics == "fermion" and basis.N == basis.r)
    cut = basis.offsets[basis.N] if top_is_cut else basis.dim
    mixed_dense = mixed.to_dense() - inner * np.eye(basis.dim)
    residual = np.linalg.norm(mixed_dense[:cut, :cut], ord=2)
    for pure in (pure_c, pure_a):
        residual += float(np.linalg.norm(pure.to_dense(), ord=2))
    return float(residual)


# ---------------------------------------------------------------------------
# second quantization
# ---------------------------------------------------------------------------

def second_quantize_onebody(basis: FockBasis, A) -> FockOperator:
    """Lift an r x r matrix to sum_ij A_ij a†_i a_j, sector by sector."""
    A = as_matrix(A)
    if A.shape != (basis.r, basis.r):
        raise ValueError(f"one-body matrix must be {basis.r} x {basis.r}, got {A.shape}")
    fermion = basis.statistics == "fermion"
    blocks = {}
    for n in range(basis.N + 1):
        tuples = basis.sectors[n]
        index = basis._index[n]
        mat = np.zeros((len(tuples), len(tuples)), dtype=complex)
        for s, occ in enumerate(tuples):
            if fermion:
                for pos_j, j in enumerate(occ):
                    reduced = occ[:pos_j] + occ[pos_j + 1:]
                    sign_j = (-1.0) ** pos_j
                    for i in range(basis.r):
                        a_ij = A[i, j]
                        if a_ij == 0:
                            continue
                        pos_i = bisect.bisect_left(reduced, i)
                        if pos_i < len(reduced) and reduced[pos_i] == i:
                            continue
                        target = reduced[:pos_i] + (i,) + reduced[pos_i:]
                        mat[index[target], s] += a_ij * sign_j * (-1.0) ** pos_i
            else:
                counts = Counter(occ)
                for j in counts:
                    amp_j = math.sqrt(counts[j])
                    pos_j = occ.index(j)
                    reduced = occ[:pos_j] + occ[pos_j + 1:]
                    for i in range(basis.r):
                        a_ij = A[i, j]
                        if a_ij == 0:
                            continue
                        amp_i = math.sqrt(reduced.count(i) + 1)
                        pos_i = bisect.bisect_left(reduced, i)
                        target = reduced[:pos_i] + (i,) + reduced[pos_i:]
                        mat[index[target], s] += a_ij * amp_j * amp_i
        blocks[(n, n)] = mat
    return FockOperator(basis, blocks)


def number_operator(basis: FockBasis) -> FockOperator:
    return second_quantize_onebody(basis, np.eye(basis.r))


def _removable_pairs(occ: tuple, fermion: bool):
    """Ordered pairs (k, l), k <= l, that a_l a_k can take out of occ,
    with the amplitude of the removal and the remaining tuple."""
    out = []
    if fermion:
        for pk, pl in itertools.combinations(range(len(occ)), 2):
            k, l = occ[pk], occ[pl]
            # a_k acts first at position pk, then a_l at position pl - 1
            amp = (-1.0) ** pk * (-1.0) ** (pl - 1)
            rest = tuple(x for idx, x in enumerate(occ) if idx not in (pk, pl))
            out.append((k, l, amp, rest))
    else:
        counts = Counter(occ)
        modes = sorted(counts)
        for a, k in enumerate(modes):
            for l in modes[a:]:
                if k == l:
                    if counts[k] < 2:
                        continue
                    amp = math.sqrt(counts[k] * (counts[k] - 1))
                else:
                    amp = math.sqrt(counts[k] * counts[l])
                removed = Counter({k: 1}) + Counter({l: 1})
                rest = []
                for m in occ:
                    if removed.get(m, 0) > 0:
                        removed[m] -= 1
                    else:
                        rest.append(m)
                out.append((k, l, amp, tuple(rest)))
    return out


def _insert_mode(occ: tuple, k: int, fermion: bool):
    """Result and amplitude of a†_k on the tuple occ; None when Pauli kills it."""
    pos = bisect.bisect_left(occ, k)
    if fermion:
        if pos < len(occ) and occ[pos] == k:
            return None, 0.0
        return occ[:pos] + (k,) + occ[pos:], (-1.0) ** pos
    return occ[:pos] + (k,) + occ[pos:], math.sqrt(occ.count(k) + 1)


def second_quantize_twobody(basis: FockBasis, W: TwoBodyKernel) -> FockOperator:
    """Lift a pair tensor to sum W_{ij,kl} a†_i a†_j a_l a_k.

    Annihilates sectors 0 and 1; on sector n it reproduces the sum of the
    pair interaction over all particle pairs.
    """
    if W.statistics != basis.statistics:
        raise ValueError(
            f"kernel statistics {W.statistics!r} does not match basis "
            f"{basis.statistics!r}")
    if W.n_modes != basis.r:
        raise ValueError(f"kernel has {W.n_modes} modes, basis has {basis.r}")
    fermion = basis.statistics == "fermion"
    blocks = {}
    for n in range(2, basis.N + 1):
        tuples = basis.sectors[n]
        index = basis._index[n]
        mat = np.zeros((len(tuples), len(tuples)), dtype=complex)
        for s, occ in enumerate(tuples):
            for k, l, amp_out, rest in _removable_pairs(occ, fermion):
                for (i, j), w in W.column_entries((k, l)):
                    mid, amp_j = _insert_mode(rest, j, fermion)
                    if mid is None:
                        continue
                    target, amp_i = _insert_mode(mid, i, fermion)
                    if target is None:
                        continue
                    mat[index[target], s] += w * amp_out * amp_j * amp_i
        blocks[(n, n)] = mat
    return FockOperator(basis, blocks)


def assemble_hamiltonian(basis: FockBasis, h, W: TwoBodyKernel | None) -> FockOperator:
    """One-body part plus pair interaction; zero on the vacuum, h on sector 1."""
    out = second_quantize_onebody(basis, h)
    if W is not None:
        out = out + second_quantize_twobody(basis, W)
    return out


# ---------------------------------------------------------------------------
# products, coherent states
# ---------------------------------------------------------------------------

def _sector_of_length(basis: FockBasis, vec: np.ndarray, n: int | None):
    """Resolve a sector coefficient vector, inferring n from the length when
    unambiguous."""
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    if n is not None:
        if vec.size != len(basis.sectors[n]):
            raise ValueError(
                f"sector-{n} vector must have {len(basis.sectors[n])} entries, "
                f"got {vec.size}")
        return vec, n
    matches = [m for m, sec in enumerate(basis.sectors) if len(sec) == vec.size]
    if len(matches) != 1:
        raise ValueError(
            f"vector length {vec.size} matches sectors {matches}; pass the "
            "particle number explicitly")
    return vec, matches[0]


def wedge(basis: FockBasis, psi1, psi2, n1: int | None = None,
          n2: int | None = None) -> np.ndarray:
    """(Anti)symmetric product of two sector vectors, as a sector vector.

    Equivalent to turning psi1 into a string of creation operators and
    applying it to psi2. For fermions this is the wedge product; for bosons
    the symmetric product with its square-root factors, e.g. f with itself
    gives sqrt(2) f (x) f.
    """
    psi1, n1 = _sector_of_length(basis, psi1, n1)
    psi2, n2 = _sector_of_length(basis, psi2, n2)
    if n1 + n2 > basis.N:
        raise ValueError(
            f"product lives in sector {n1 + n2}, beyond the cutoff {basis.N}")
    fermion = basis.statistics == "fermion"
    out = np.zeros(len(basis.sectors[n1 + n2]), dtype=complex)
    index_out = basis._index[n1 + n2]
    for s1, occ1 in enumerate(basis.sectors[n1]):
        c1 = psi1[s1]
        if c1 == 0:
            continue
        # the creation string of a normalized basis tuple carries the
        # multiset normalization of that tuple
        c1 = c1 / math.sqrt(multiplicity_factorial(occ1))
        for s2, occ2 in enumerate(basis.sectors[n2]):
            c2 = psi2[s2]
            if c2 == 0:
                continue
            target, amp = occ2, 1.0
            for k in reversed(occ1):
                target, step = _insert_mode(target, k, fermion)
                if target is None:
                    amp = 0.0
                    break
                amp *= step
            if amp != 0.0:
                out[index_out[target]] += c1 * c2 * amp
    return out


def weyl_coherent_state(basis: FockBasis, f, tail_tolerance: float = 1e-8):
    """Coherent state exp(a†(f) - a(f)) applied to the vacuum, renormalized.

    Returns (vector, tail_weight) where tail_weight is the Poisson mass the
    untruncated state would carry above sector N. Raises when that mass
    exceeds ``tail_tolerance``: the truncated space cannot represent the
    state faithfully then.
    """
    if basis.statistics != "boson":
        raise ValueError("coherent states require a bosonic basis")
    f = np.asarray(f, dtype=complex).reshape(-1)
    lam = float(np.vdot(f, f).real)
    kept = sum(lam**n / math.factorial(n) for n in range(basis.N + 1))
    tail = 1.0 - math.exp(-lam) * kept
    tail = max(tail, 0.0)
    if tail > tail_tolerance:
        raise ValueError(
            f"truncation drops Poisson weight {tail:.3e} > {tail_tolerance:.1e}; "
            "raise N or shrink f")
    generator = creation(basis, f) - annihilation(basis, f)
    vec = scipy.linalg.expm(generator.to_dense()) @ vacuum_state(basis)
    vec = vec / np.linalg.norm(vec)
    return vec, tail


# ---------------------------------------------------------------------------
# lifting one-body maps to sectors and tensor powers
# ---------------------------------------------------------------------------

def permanent(mat: np.ndarray) -> complex:
    """Permanent of a small square matrix, by direct permutation sum."""
    n = mat.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    return sum(
        math.prod(mat[i, sigma[i]] for i in range(n))
        for sigma in itertools.permutations(range(n)))


def sector_lift(B: np.ndarray, n: int, statistics: str,
                tuples_out=None, tuples_in=None) -> np.ndarray:
    """Matrix of the n-fold product lift of B between occupation bases.

    Fermions: entries are minors det B[T, S]. Bosons: permanents of the
    repeated-index submatrix, divided by the multiset normalizations of the
    two tuples. B may be rectangular (different in/out mode counts); the
    tuple lists default to the full occupation bases of those mode counts.
    """
    B = np.asarray(B, dtype=complex)
    r_out, r_in = B.shape
    combine = (itertools.combinations if statistics == "fermion"
               else itertools.combinations_with_replacement)
    if tuples_out is None:
        tuples_out = tuple(combine(range(r_out), n))
    if tuples_in is None:
        tuples_in = tuple(combine(range(r_in), n))
    out = np.zeros((len(tuples_out), len(tuples_in)), dtype=complex)
    for col, S in enumerate(tuples_in):
        cols = B[:, S]
        for row, T in enumerate(tuples_out):
            sub = cols[T, :]
            if statistics == "fermion":
                out[row, col] = np.linalg.det(sub) if n else 1.0
            else:
                norm = math.sqrt(multiplicity_factorial(T)
                                 * multiplicity_factorial(S))
                out[row, col] = permanent(sub) / norm
    return out


def fock_lift(basis: FockBasis, B) -> FockOperator:
    """Block-diagonal lift 1 (+) B (+) B-on-2-bodies (+) ... on the basis."""
    B = as_matrix(B)
    blocks = {}
    for n in range(basis.N + 1):
        blocks[(n, n)] = sector_lift(B, n, basis.statistics,
                                     tuples_out=basis.sectors[n],
                                     tuples_in=basis.sectors[n])
    return FockOperator(basis, blocks)


def tensor_embedding(r: int, n: int, statistics: str, tuples=None) -> np.ndarray:
    """Isometry from the sector-n occupation basis into the n-fold tensor power.

    Columns are the (anti)symmetrized product vectors of each occupation
    tuple, normalized; shape (r**n, sector dimension). Index convention for
    the tensor factor axes: first factor is the most significant digit.
    """
    combine = (itertools.combinations if statistics == "fermion"
               else itertools.combinations_with_replacement)
    if tuples is None:
        tuples = tuple(combine(range(r), n))
    out = np.zeros((r**n, len(tuples)), dtype=complex)
    if n == 0:
        out[0, :] = 1.0
        return out
    powers = r ** np.arange(n - 1, -1, -1)
    for col, occ in enumerate(tuples):
        if statistics == "fermion":
            scale = 1.0 / math.sqrt(math.factorial(n))
            for sigma in itertools.permutations(range(n)):
                flat = sum(occ[sigma[a]] * powers[a] for a in range(n))
                out[flat, col] += _perm_sign(sigma) * scale
        else:
            scale = 1.0 / math.sqrt(math.factorial(n)
                                    * multiplicity_factorial(occ))
            for sigma in itertools.permutations(range(n)):
                flat = sum(occ[sigma[a]] * powers[a] for a in range(n))
                out[flat, col] += scale
    return out


def _perm_sign(sigma) -> float:
    sign = 1.0
    for a, b in itertools.combinations(range(len(sigma)), 2):
        if sigma[a] > sigma[b]:
            sign = -sign
    return sign


def embed_sector_vectors(mat: np.ndarray, r: int, n: int, statistics: str,
                         tuples=None) -> np.ndarray:
    """Apply the tensor-power embedding to sector coefficient columns.

    Same action as tensor_embedding(r, n, statistics) @ mat, but built row
    by row so the dense r^n x dim_n isometry is never materialized.
    """
    combine = (itertools.combinations if statistics == "fermion"
               else itertools.combinations_with_replacement)
    if tuples is None:
        tuples = tuple(combine(range(r), n))
    mat = np.atleast_2d(np.asarray(mat, dtype=complex))
    out = np.zeros((r**n, mat.shape[1]), dtype=complex)
    if n == 0:
        out[0] = mat[0]
        return out
    powers = r ** np.arange(n - 1, -1, -1)
    for col, occ in enumerate(tuples):
        row = mat[col]
        if not np.any(row):
            continue
        if statistics == "fermion":
            scale = 1.0 / math.sqrt(math.factorial(n))
            for sigma in itertools.permutations(range(n)):
                flat = sum(occ[sigma[a]] * powers[a] for a in range(n))
                out[flat] += _perm_sign(sigma) * scale * row
        else:
            scale = 1.0 / math.sqrt(math.factorial(n) * multiplicity_factorial(occ))
            for sigma in itertools.permutations(range(n)):
                flat = sum(occ[sigma[a]] * powers[a] for a in range(n))
                out[flat] += scale * row
    return out


def project_sector_vectors(mat: np.ndarray, r: int, n: int, statistics: str,
                           tuples=None) -> np.ndarray:
    """Adjoint of embed_sector_vectors: tensor-power columns to sector ones."""
    combine = (itertools.combinations if statistics == "fermion"
               else itertools.combinations_with_replacement)
    if tuples is None:
        tuples = tuple(combine(range(r), n))
    mat = np.atleast_2d(np.asarray(mat, dtype=complex))
    out = np.zeros((len(tuples), mat.shape[1]), dtype=complex)
    if n == 0:
        out[0] = mat[0]
        return out
    powers = r ** np.arange(n - 1, -1, -1)
    for col, occ in enumerate(tuples):
        if statistics == "fermion":
            scale = 1.0 / math.sqrt(math.factorial(n))
            for sigma in itertools.permutations(range(n)):
                flat = sum(occ[sigma[a]] * powers[a] for a in range(n))
                out[col] += _perm_sign(sigma) * scale * mat[flat]
        else:
            scale = 1.0 / math.sqrt(math.factorial(n) * multiplicity_factorial(occ))
            for sigma in itertools.permutations(range(n)):
                flat = sum(occ[sigma[a]] * powers[a] for a in range(n))
                out[col] += scale * mat[flat]
    return out


# ---------------------------------------------------------------------------
# text export
# ---------------------------------------------------------------------------

def sector_coo_text(op: FockOperator) -> str:
    """Sector-tagged coordinate list: one line per nonzero entry.

    Format: header with the basis signature, then lines
    ``out_sector in_sector row col real imag`` with local (in-sector) indices.
    """
    basis = op.basis
    lines = [f"# fock-operator r={basis.r} N={basis.N} statistics={basis.statistics}",
             "# out_sector in_sector row col re im"]
    for (m, n) in sorted(op.blocks):
        mat = op.blocks[(m, n)]
        rows, cols = np.nonzero(np.abs(mat) > 0)
        for a, b in zip(rows, cols):
            v = mat[a, b]
            lines.append(f"{m} {n} {a} {b} {v.real:.17g} {v.imag:.17g}")
    return "\n".join(lines) + "\n"
