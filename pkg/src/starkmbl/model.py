"""Coupling graphs, on-site potentials, and sector operators of the XY model.

The Hamiltonian acting inside a fixed-excitation sector is

    H = sum_{(i,j)} 2*pi*J_ij (hop i<->j)  +  sum_j 2*pi*W_j n_j

with J_ij and W_j given as frequencies in MHz (f = omega/2pi).  All operator
entries are stored as angular frequencies in rad/us, so a time t in ns
accumulates phase 2*pi * f[MHz] * t[ns] * 1e-3.  hbar = 1 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from .basis import SectorBasis

__all__ = [
    "ANGULAR_PER_MHZ",
    "NS_TO_US",
    "DeviceGraph",
    "PotentialProfile",
    "SparseOperator",
    "QuantumState",
    "triangular_ladder",
    "nearest_neighbor_chain",
    "build_hamiltonian",
    "product_state_energy",
    "build_dipole_operator",
    "build_imbalance_operator",
]

ANGULAR_PER_MHZ = 2.0 * np.pi  # rad/us per MHz
NS_TO_US = 1.0e-3


@dataclass(frozen=True)
class DeviceGraph:
    """Sites and weighted coupling edges (i, j, J_ij/2pi in MHz)."""

    n_sites: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_sites <= 0:
            raise ValueError("n_sites must be positive")
        object.__setattr__(
            self,
            "edges",
            tuple((int(i), int(j), float(c)) for i, j, c in self.edges),
        )
        seen = set()
        for i, j, c in self.edges:
            if not 0 <= i < j < self.n_sites:
                raise ValueError(f"edge ({i}, {j}) violates 0 <= i < j < {self.n_sites}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            if not math.isfinite(c):
                raise ValueError(f"coupling on edge ({i}, {j}) is not finite")
            seen.add((i, j))

    @property
    def mean_coupling(self) -> float:
        """Average of all J_ij/2pi values in MHz (0 for an edge-free graph)."""
        if not self.edges:
            return 0.0
        return float(np.mean([c for _, _, c in self.edges]))


@dataclass(frozen=True)
class PotentialProfile:
    """On-site energies W_j in MHz.

    ``kind`` records how the profile was produced: a linear tilt
    (``W_j = -j * gamma``), a seeded uniform draw from [-V, V], or an
    explicit list.  The resolved values always live in ``w_mhz``.
    """

    kind: str
    w_mhz: tuple[float, ...]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "w_mhz", tuple(float(w) for w in self.w_mhz))
        if not all(math.isfinite(w) for w in self.w_mhz):
            raise ValueError("potential contains non-finite entries")

    @property
    def n_sites(self) -> int:
        return len(self.w_mhz)

    def values(self) -> np.ndarray:
        return np.asarray(self.w_mhz, dtype=np.float64)

    @classmethod
    def stark(cls, n_sites: int, gamma_mhz: float) -> "PotentialProfile":
        """Linear tilt W_j = -j * gamma, site 0 at zero energy."""
        w = [-j * float(gamma_mhz) for j in range(n_sites)]
        return cls("stark", tuple(w), {"gamma_mhz": float(gamma_mhz)})

    @classmethod
    def random(cls, n_sites: int, v_mhz: float, seed: int) -> "PotentialProfile":
        """Uniform draw from [-V, V] using a counter-based (Philox) generator."""
        if v_mhz < 0:
            raise ValueError("half width V must be nonnegative")
        rng = np.random.Generator(np.random.Philox(int(seed)))
        w = rng.uniform(-v_mhz, v_mhz, size=n_sites)
        return cls("random", tuple(w), {"v_mhz": float(v_mhz), "seed": int(seed)})

    @classmethod
    def explicit(cls, w_mhz) -> "PotentialProfile":
        return cls("explicit", tuple(float(w) for w in w_mhz))


def triangular_ladder(
    n_sites: int,
    nn_mhz: float = 3.5,
    nnn_mhz: float = 1.5,
    spread: float = 0.15,
    seed: int = 7,
) -> DeviceGraph:
    """Synthetic default device: chain with NN and NNN couplings.

    Couplings are drawn uniformly within ``spread`` (relative) of the target
    values, from a seeded Philox stream, mimicking the site-to-site
    inhomogeneity of a real device while staying fully reproducible.
    """
    rng = np.random.Generator(np.random.Philox(int(seed)))
    edges = []
    for i in range(n_sites - 1):
        j = nn_mhz * (1.0 + spread * rng.uniform(-1.0, 1.0))
        edges.append((i, i + 1, j))
    for i in range(n_sites - 2):
        j = nnn_mhz * (1.0 + spread * rng.uniform(-1.0, 1.0))
        edges.append((i, i + 2, j))
    return DeviceGraph(n_sites, tuple(edges))


def nearest_neighbor_chain(
    n_sites: int,
    coupling_mhz: float = 1.5,
    spread: float = 0.15,
    seed: int = 7,
) -> DeviceGraph:
    """Open chain with NN couplings only (integrable reference model)."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    edges = [
        (i, i + 1, coupling_mhz * (1.0 + spread * rng.uniform(-1.0, 1.0)))
        for i in range(n_sites - 1)
    ]
    return DeviceGraph(n_sites, tuple(edges))


class SparseOperator:
    """Hermitian operator over a sector basis: CSR matrix or diagonal fast path."""

    def __init__(
        self,
        basis: SectorBasis,
        matrix: sparse.csr_matrix | None = None,
        diagonal: np.ndarray | None = None,
    ):
        if (matrix is None) == (diagonal is None):
            raise ValueError("provide exactly one of matrix, diagonal")
        self.basis = basis
        self.dimension = basis.dimension
        if diagonal is not None:
            diagonal = np.asarray(diagonal, dtype=np.float64)
            if diagonal.shape != (self.dimension,):
                raise ValueError("diagonal length does not match basis dimension")
        else:
            if matrix.shape != (self.dimension, self.dimension):
                raise ValueError("matrix shape does not match basis dimension")
        self._matrix = matrix
        self._diagonal = diagonal

    @property
    def is_diagonal(self) -> bool:
        return self._diagonal is not None

    def diagonal(self) -> np.ndarray:
        if self._diagonal is not None:
            return self._diagonal
        return np.asarray(self._matrix.diagonal())

    def matrix(self) -> sparse.csr_matrix:
        """CSR form (diagonal operators are expanded on demand)."""
        if self._matrix is not None:
            return self._matrix
        return sparse.diags(self._diagonal, format="csr")

    def to_dense(self) -> np.ndarray:
        if self._diagonal is not None:
            return np.diag(self._diagonal)
        return self._matrix.toarray()

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        if self._diagonal is not None:
            return self._diagonal * vec
        if np.iscomplexobj(vec) and not np.iscomplexobj(self._matrix.data):
            # two real matvecs beat scipy's per-call dtype upcast
            return (self._matrix @ vec.real) + 1j * (self._matrix @ vec.imag)
        return self._matrix @ vec

    def expectation(self, amplitudes: np.ndarray) -> float:
        """<psi|A|psi> for a Hermitian operator (real by construction)."""
        if self._diagonal is not None:
            return float(np.sum(np.abs(amplitudes) ** 2 * self._diagonal))
        return float(np.vdot(amplitudes, self.matvec(amplitudes)).real)

    def __matmul__(self, vec: np.ndarray) -> np.ndarray:
        return self.matvec(vec)


NORM_TOL = 1e-10


class QuantumState:
    """Normalized complex amplitude vector over a sector basis."""

    def __init__(self, basis: SectorBasis, amplitudes: np.ndarray, normalize: bool = False):
        amps = np.asarray(amplitudes, dtype=np.complex128)
        if amps.shape != (basis.dimension,):
            raise ValueError("amplitude vector length does not match basis dimension")
        if normalize:
            nrm = np.linalg.norm(amps)
            if nrm == 0:
                raise ValueError("cannot normalize the zero vector")
            amps = amps / nrm
        self.basis = basis
        self.amplitudes = amps

    @classmethod
    def from_bitstring(cls, basis: SectorBasis, state: int) -> "QuantumState":
        amps = np.zeros(basis.dimension, dtype=np.complex128)
        amps[basis.rank(state)] = 1.0
        return cls(basis, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def check_normalized(self, tol: float = NORM_TOL) -> None:
        drift = abs(self.norm() - 1.0)
        if drift > tol:
            raise ValueError(f"state norm drift {drift:g} exceeds {tol:g}")

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def build_hamiltonian(
    graph: DeviceGraph, potential: PotentialProfile, basis: SectorBasis
) -> SparseOperator:
    """Sector XY Hamiltonian: 2pi*J_ij hops along edges plus 2pi*W_j occupation terms.

    Hopping connects bitstrings that differ by moving one excitation across an
    edge.  Both (p, q) and (q, p) entries are written from the same float, so
    the stored matrix is exactly symmetric.
    """
    if graph.n_sites != basis.n_sites:
        raise ValueError(
            f"graph has {graph.n_sites} sites but basis expects {basis.n_sites}"
        )
    if potential.n_sites != basis.n_sites:
        raise ValueError(
            f"potential has {potential.n_sites} sites but basis expects {basis.n_sites}"
        )
    states = basis.states
    dim = basis.dimension

    w_angular = ANGULAR_PER_MHZ * potential.values()
    diag = basis.occupations() @ w_angular

    rows = [np.arange(dim, dtype=np.int64)]
    cols = [np.arange(dim, dtype=np.int64)]
    vals = [diag]
    for i, j, c in graph.edges:
        omega = ANGULAR_PER_MHZ * c
        for a, b in ((i, j), (j, i)):
            # excitation hops from occupied site a to empty site b
            src = np.nonzero(((states >> a) & 1 == 1) & ((states >> b) & 1 == 0))[0]
            if src.size == 0:
                continue
            targets = states[src] ^ ((1 << a) | (1 << b))
            dst = basis.index_of(targets)
            rows.append(src)
            cols.append(dst)
            vals.append(np.full(src.size, omega))
    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    ).tocsr()
    return SparseOperator(basis, matrix=matrix)


def product_state_energy(state: int, potential: PotentialProfile, graph: DeviceGraph) -> float:
    """<s|H|s> for a product state, in rad/us.

    The hopping term has zero diagonal expectation on product states, so only
    the occupied-site potential contributes.
    """
    if graph.n_sites != potential.n_sites:
        raise ValueError("graph and potential disagree on the number of sites")
    w = potential.values()
    total = 0.0
    for jsite in range(potential.n_sites):
        if (state >> jsite) & 1:
            total += w[jsite]
    return ANGULAR_PER_MHZ * total


def product_state_energies(basis: SectorBasis, potential: PotentialProfile) -> np.ndarray:
    """Diagonal expectations <s|H|s> for every sector state at once, in rad/us."""
    if potential.n_sites != basis.n_sites:
        raise ValueError("potential does not match basis")
    return basis.occupations() @ (ANGULAR_PER_MHZ * potential.values())


def build_dipole_operator(basis: SectorBasis, normalized: bool = False) -> SparseOperator:
    """Diagonal dipole moment sum_j j*n_j (dimensionless site-index weights).

    With ``normalized`` the eigenvalues are divided by n_sites**2, the
    intensive form used for eigenstate-fluctuation scaling.
    """
    weights = np.arange(basis.n_sites, dtype=np.float64)
    if normalized:
        weights = weights / basis.n_sites**2
    return SparseOperator(basis, diagonal=basis.occupations() @ weights)


def imbalance_weights(initial_state: int, n_sites: int) -> np.ndarray:
    """Per-site weights +1/N_occupied on initially excited sites, -1/N_empty elsewhere."""
    n_occ = int(initial_state).bit_count()
    n_emp = n_sites - n_occ
    if n_occ == 0 or n_emp == 0:
        raise ValueError(
            "imbalance is undefined for an all-excited or all-ground initial state"
        )
    bits = np.array([(initial_state >> i) & 1 for i in range(n_sites)], dtype=np.float64)
    return bits / n_occ - (1.0 - bits) / n_emp


def build_imbalance_operator(initial_state: int, basis: SectorBasis) -> SparseOperator:
    """Diagonal pattern-overlap operator; expectation is 1 on the initial state."""
    if int(initial_state).bit_count() != basis.n_excitations:
        raise ValueError("initial state lies outside the sector")
    lam = imbalance_weights(initial_state, basis.n_sites)
    return SparseOperator(basis, diagonal=basis.occupations() @ lam)
