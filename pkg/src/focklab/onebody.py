"""Discretized one-body spaces and the operators that live on them.

A lattice in d = 1, 2 or 3 dimensions with n points per axis inside a box of
side L centered at the origin, spacing h = L/n. Sites are cell-centered,
x_j = -L/2 + (j + 1/2) h along each axis, and the site indicator functions
(normalized to unit L2 norm) form the orthonormal mode basis. Every operator
in this module is a plain matrix in that basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OneBodySpace",
    "OneBodyOperator",
    "TwoBodyKernel",
    "LocalizationOperator",
    "build_lattice_space",
    "kinetic_operator",
    "neg_laplacian",
    "forward_differences",
    "potential_operator",
    "pair_distance_matrix",
    "soft_coulomb",
    "two_body_kernel",
    "window_localizer",
    "ims_partition",
    "ims_identity_check",
]

HERMITICITY_TOL = 1e-12
DEFAULT_MODE_CAP = 64


@dataclass(frozen=True)
class OneBodySpace:
    """A finite orthonormal one-body basis, by default a position lattice.

    Attributes
    ----------
    dim : int
        Spatial dimension (1, 2 or 3).
    points : int
        Lattice points per axis.
    box : float
        Side length L of the box.
    boundary : str
        'dirichlet' or 'periodic'.
    kind : str
        'position-lattice' or 'custom-orthonormal'.
    """

    dim: int
    points: int
    box: float
    boundary: str = "dirichlet"
    kind: str = "position-lattice"
    sites: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def spacing(self) -> float:
        return self.box / self.points

    @property
    def n_modes(self) -> int:
        return self.points**self.dim

    @property
    def volume_element(self) -> float:
        return self.spacing**self.dim

    def axis_coordinates(self) -> np.ndarray:
        h = self.spacing
        return -0.5 * self.box + h * (np.arange(self.points) + 0.5)


def build_lattice_space(
    d: int,
    n: int,
    L: float,
    boundary: str = "dirichlet",
    mode_cap: int = DEFAULT_MODE_CAP,
) -> OneBodySpace:
    """Build a cell-centered position lattice with n^d modes and spacing L/n.

    Raises
    ------
    ValueError
        If d is not 1, 2 or 3, n < 2, L <= 0, or n^d exceeds ``mode_cap``
        (Fock dimensions explode past a few dozen modes).
    """
    if d not in (1, 2, 3):
        raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d}")
    if n < 2:
        raise ValueError(f"need at least 2 points per axis, got {n}")
    if L <= 0:
        raise ValueError(f"box length must be positive, got {L}")
    if boundary not in ("dirichlet", "periodic"):
        raise ValueError(f"unknown boundary tag {boundary!r}")
    if n**d > mode_cap:
        raise ValueError(
            f"{n}^{d} = {n**d} modes exceeds the mode cap {mode_cap}; "
            "raise mode_cap explicitly if you really want this"
        )
    axis = -0.5 * L + (L / n) * (np.arange(n) + 0.5)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    sites = np.stack([g.reshape(-1) for g in grids], axis=1)
    sites.setflags(write=False)
    return OneBodySpace(dim=d, points=n, box=float(L), boundary=boundary, sites=sites)


@dataclass(frozen=True)
class OneBodyOperator:
    """A Hermitian matrix on the one-body space, with a human label."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"one-body operator must be square, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL * max(1.0, np.max(np.abs(m))):
            raise ValueError(f"operator {self.label!r} is not Hermitian")
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0]


def as_matrix(op) -> np.ndarray:
    """Accept either an OneBodyOperator or a raw square array."""
    if isinstance(op, OneBodyOperator):
        return op.matrix
    return np.asarray(op)


def _axis_second_difference(n: int, h: float, boundary: str) -> np.ndarray:
    t = np.zeros((n, n))
    np.fill_diagonal(t, 2.0)
    idx = np.arange(n - 1)
    t[idx, idx + 1] -= 1.0
    t[idx + 1, idx] -= 1.0
    if boundary == "periodic":
        t[0, n - 1] -= 1.0
        t[n - 1, 0] -= 1.0
    return t / h**2


def neg_laplacian(space: OneBodySpace) -> np.ndarray:
    """Matrix of -Laplacian (second differences, no 1/2) on the lattice."""
    n, h = space.points, space.spacing
    t1 = _axis_second_difference(n, h, space.boundary)
    eye = np.eye(n)
    total = np.zeros((space.n_modes, space.n_modes))
    for axis in range(space.dim):
        factors = [t1 if a == axis else eye for a in range(space.dim)]
        term = factors[0]
        for f in factors[1:]:
            term = np.kron(term, f)
        total += term
    return total


def kinetic_operator(space: OneBodySpace) -> OneBodyOperator:
    """-Laplacian/2 with the boundary condition of the space. Hermitian PSD."""
    return OneBodyOperator(0.5 * neg_laplacian(space), label="kinetic")


def forward_differences(space: OneBodySpace) -> list[np.ndarray]:
    """Per-axis forward-difference matrices D with sum_axis D^T D = -Laplacian.

    Dirichlet: each 1D factor is (n+1) x n and includes the two boundary rows,
    so the wall contributions of the second-difference stencil are kept.
    Periodic: n x n with wraparound.
    """
    n, h = space.points, space.spacing
    if space.boundary == "periodic":
        d1 = (np.roll(np.eye(n), -1, axis=0) - np.eye(n)) / h
    else:
        d1 = np.zeros((n + 1, n))
        idx = np.arange(n)
        d1[idx, idx] -= 1.0
        d1[idx + 1, idx] += 1.0
        d1 /= h
    eye = np.eye(n)
    out = []
    for axis in range(space.dim):
        factors = [d1 if a == axis else eye for a in range(space.dim)]
        term = factors[0]
        for f in factors[1:]:
            term = np.kron(term, f)
        out.append(term)
    return out


def potential_operator(space: OneBodySpace, v_samples) -> OneBodyOperator:
    """Diagonal multiplication operator from one real sample per site."""
    v = np.asarray(v_samples, dtype=float).reshape(-1)
    if v.size != space.n_modes:
        raise ValueError(
            f"expected {space.n_modes} potential samples, got {v.size}"
        )
    return OneBodyOperator(np.diag(v), label="potential")


def pair_distance_matrix(space: OneBodySpace) -> np.ndarray:
    """Euclidean distances between all site pairs (min-image when periodic)."""
    delta = space.sites[:, None, :] - space.sites[None, :, :]
    if space.boundary == "periodic":
        delta = delta - space.box * np.round(delta / space.box)
    return np.sqrt(np.sum(delta**2, axis=2))


def soft_coulomb(distance, softening: float):
    """1/sqrt(d^2 + a^2), the standard lattice-safe Coulomb regularization."""
    return 1.0 / np.sqrt(np.asarray(distance) ** 2 + softening**2)


class TwoBodyKernel:
    """Pair-interaction tensor W_{ij,kl} over sorted mode pairs i<=j, k<=l.

    The tensor is stored as a Hermitian matrix on the space of sorted pairs.
    Fermionic diagonal pairs (i=i) are identically zero; bosonic entries carry
    the (1+delta_ij)(1+delta_kl) normalization divisor. For a multiplication
    pair potential w the tensor is pair-diagonal with entries w(x_i - x_j)
    (and w(0)/2 on bosonic i=j pairs), and the raw site table is kept in
    ``site_pair_values`` for mean-field solvers.
    """

    def __init__(self, n_modes: int, statistics: str, tensor: np.ndarray,
                 site_pair_values: np.ndarray | None = None):
        if statistics not in ("fermion", "boson"):
            raise ValueError(f"unknown statistics {statistics!r}")
        self.n_modes = n_modes
        self.statistics = statistics
        self.pairs = list(itertools.combinations_with_replacement(range(n_modes), 2))
        self.pair_index = {p: a for a, p in enumerate(self.pairs)}
        tensor = np.asarray(tensor, dtype=complex)
        if tensor.shape != (len(self.pairs), len(self.pairs)):
            raise ValueError(
                f"tensor must be {len(self.pairs)} x {len(self.pairs)}, got {tensor.shape}"
            )
        scale = max(1.0, float(np.max(np.abs(tensor))))
        if np.max(np.abs(tensor - tensor.conj().T)) > HERMITICITY_TOL * scale:
            raise ValueError("kernel is not Hermitian on the two-body sector")
        if statistics == "fermion":
            for a, (i, j) in enumerate(self.pairs):
                if i == j and (np.any(tensor[a, :] != 0) or np.any(tensor[:, a] != 0)):
                    raise ValueError("fermionic kernel has nonzero equal-mode pair")
        self.tensor = tensor
        self.site_pair_values = site_pair_values
        # nonzero (row_pair, col_pair, value) triples, for fast assembly
        rows, cols = np.nonzero(np.abs(tensor) > 0)
        self._entries = [(int(r), int(c), tensor[r, c]) for r, c in zip(rows, cols)]

    def entry(self, i: int, j: int, k: int, l: int) -> complex:
        return self.tensor[self.pair_index[(i, j)], self.pair_index[(k, l)]]

    def column_entries(self, pair: tuple[int, int]):
        """Nonzero (row_pair_tuple, value) of one tensor column."""
        c = self.pair_index[pair]
        col = self.tensor[:, c]
        return [(self.pairs[a], col[a]) for a in np.nonzero(np.abs(col) > 0)[0]]


def two_body_kernel(space_or_modes, w, statistics: str) -> TwoBodyKernel:
    """Build the pair tensor of a multiplication pair potential.

    Parameters
    ----------
    space_or_modes : OneBodySpace or int
        The lattice (distances computed from it) or a bare mode count when
        ``w`` is already a full site table.
    w : callable or (r, r) array
        Even pair potential; a callable is evaluated on pair distances.
    statistics : 'fermion' or 'boson'
    """
    if isinstance(space_or_modes, OneBodySpace):
        r = space_or_modes.n_modes
        if callable(w):
            table = np.asarray(w(pair_distance_matrix(space_or_modes)), dtype=float)
        else:
            table = np.asarray(w, dtype=float)
    else:
        r = int(space_or_modes)
        table = np.asarray(w, dtype=float)
    if table.shape != (r, r):
        raise ValueError(f"pair table must be {r} x {r}, got {table.shape}")
    if np.max(np.abs(table - table.T)) > 1e-12 * max(1.0, np.max(np.abs(table))):
        raise ValueError("pair potential is not even: w(x - y) != w(y - x)")
    pairs = list(itertools.combinations_with_replacement(range(r), 2))
    pair_index = {p: a for a, p in enumerate(pairs)}
    tensor = np.zeros((len(pairs), len(pairs)), dtype=complex)
    for (i, j), a in pair_index.items():
        if i == j:
            if statistics == "boson":
                tensor[a, a] = 0.5 * table[i, i]
        else:
            tensor[a, a] = table[i, j]
    return TwoBodyKernel(r, statistics, tensor, site_pair_values=table)


class LocalizationOperator:
    """A one-body contraction B with 0 <= BB* <= 1 and its complements.

    ``complement`` is sqrt(1 - BB*) (Hermitian PSD, eigenvalues clamped to
    [0, 1] against roundoff). ``complement_right`` is sqrt(1 - B*B), the one
    needed on the second slot of the doubling isometry f -> Bf + sqrt(1-B*B)f;
    the two coincide for normal B, which covers every window, projector and
    unitary built here.
    """

    def __init__(self, B, label: str = ""):
        B = np.asarray(B, dtype=complex)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"localizer must be square, got {B.shape}")
        self.matrix = B
        self.label = label
        self.complement = self._complement_sqrt(B @ B.conj().T)
        self.complement_right = self._complement_sqrt(B.conj().T @ B)
        check = self.complement @ self.complement + B @ B.conj().T
        if np.max(np.abs(check - np.eye(B.shape[0]))) > 1e-10:
            raise ValueError("complement consistency check failed")

    @staticmethod
    def _complement_sqrt(bb: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eigh(bb)
        if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
            raise ValueError(
                f"BB* eigenvalues in [{vals.min():.3e}, {vals.max():.3e}], "
                "outside [0, 1]: not a valid localizer"
            )
        vals = np.clip(vals, 0.0, 1.0)
        return (vecs * np.sqrt(1.0 - vals)) @ vecs.conj().T

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.max(np.abs(self.matrix - np.diag(np.diag(self.matrix)))) == 0.0)

    def complement_localizer(self) -> "LocalizationOperator":
        """The partner sqrt(1 - B*B) satisfying B*B + C*C = 1.

        That identity, not the left-handed one, is what the doubling isometry
        and the sector-weight complementarity of localized states rely on.
        """
        return LocalizationOperator(self.complement_right,
                                    label=f"complement({self.label})")

    @classmethod
    def identity(cls, n: int) -> "LocalizationOperator":
        return cls(np.eye(n), label="identity")


def window_localizer(space: OneBodySpace, chi_samples) -> LocalizationOperator:
    """Diagonal localizer from per-site window values in [0, 1]."""
    chi = np.asarray(chi_samples, dtype=float).reshape(-1)
    if chi.size != space.n_modes:
        raise ValueError(f"expected {space.n_modes} window samples, got {chi.size}")
    if chi.min() < 0.0 or chi.max() > 1.0:
        raise ValueError(
            f"window samples must lie in [0, 1], got range "
            f"[{chi.min():.3g}, {chi.max():.3g}]"
        )
    return LocalizationOperator(np.diag(chi), label="window")


def ims_partition(space: OneBodySpace, R: float, smoothness: str = "smooth"):
    """Radial partition of unity chi^2 + eta^2 = 1 around the box center.

    chi = 1 on |x| <= R and 0 on |x| >= 2R. The 'smooth' profile is a cosine
    ramp in between; 'sharp' is the plain indicator of |x| <= R.
    """
    if not (0.0 < R < space.box / 2):
        raise ValueError(f"radius must satisfy 0 < R < L/2 = {space.box / 2}, got {R}")
    radius = np.sqrt(np.sum(space.sites**2, axis=1))
    if smoothness == "sharp":
        chi = (radius <= R).astype(float)
    elif smoothness == "smooth":
        t = np.clip((radius - R) / R, 0.0, 1.0)
        chi = np.cos(0.5 * math.pi * t)
        chi[radius <= R] = 1.0
        chi[radius >= 2 * R] = 0.0
    else:
        raise ValueError(f"unknown smoothness tag {smoothness!r}")
    eta = np.sqrt(np.clip(1.0 - chi**2, 0.0, 1.0))
    return window_localizer(space, chi), window_localizer(space, eta)


def ims_identity_check(A, chi: LocalizationOperator, eta: LocalizationOperator) -> float:
    """Residual of the double-commutator splitting of A by a partition of unity.

    For any matrices with chi^2 + eta^2 = 1,

        A = chi A chi + eta A eta + [chi,[chi,A]]/2 + [eta,[eta,A]]/2

    holds exactly (expand [w,[w,A]] = w^2 A + A w^2 - 2 w A w and sum), so the
    returned spectral norm is zero up to roundoff. The double-commutator terms
    are the discrete stand-in for the gradient-squared localization error of
    the continuum splitting.
    """
    a = as_matrix(A)
    for w in (chi, eta):
        if not w.is_diagonal:
            raise ValueError("IMS check expects diagonal windows")
    c, e = chi.matrix, eta.matrix
    part = np.max(np.abs(c @ c + e @ e - np.eye(a.shape[0])))
    if part > 1e-12:
        raise ValueError(f"chi^2 + eta^2 deviates from identity by {part:.3e}")

    def double_comm(w):
        inner = w @ a - a @ w
        return w @ inner - inner @ w

    recombined = c @ a @ c + e @ a @ e + 0.5 * double_comm(c) + 0.5 * double_comm(e)
    return float(np.linalg.norm(a - recombined, ord=2))
