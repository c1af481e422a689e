"""Fixed-excitation-number bitstring basis with combinadic indexing.

The XY hopping Hamiltonian conserves the total excitation number, so all
linear algebra lives in the sector of ``n_sites``-bit integers with exactly
``n_excitations`` set bits.  Bit ``i`` (least significant = site 0) records
the occupation of site ``i``.  States are ordered by ascending integer
value, which for this bit convention coincides with lexicographic order of
the bitstrings written most-significant-site first.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["SectorBasis", "build_sector_basis", "bits_array"]


def bits_array(state: int, n_sites: int) -> np.ndarray:
    """Occupation of each site (bit i of ``state``) as a float vector."""
    return np.array([(int(state) >> i) & 1 for i in range(n_sites)], dtype=np.float64)

_MAX_SITES = 63  # states are stored as signed 64-bit integers


class SectorBasis:
    """Ordered basis of all ``n_sites``-bit states with fixed popcount.

    The state list is generated lazily: constructing the basis only computes
    the dimension, so huge sectors (for example 29 sites at half filling,
    dimension 77,558,760) can be described without materializing them.

    Parameters
    ----------
    n_sites : int
        Number of lattice sites (qubits), at most 63.
    n_excitations : int
        Number of occupied sites in every basis state.
    """

    def __init__(self, n_sites: int, n_excitations: int):
        if not 0 <= n_excitations <= n_sites:
            raise ValueError(
                f"need 0 <= n_excitations <= n_sites, got ({n_sites}, {n_excitations})"
            )
        if n_sites > _MAX_SITES:
            raise ValueError(f"n_sites = {n_sites} exceeds the {_MAX_SITES}-bit state limit")
        dim = math.comb(n_sites, n_excitations)
        if dim > np.iinfo(np.int64).max:
            raise OverflowError(
                f"sector dimension C({n_sites},{n_excitations}) = {dim} "
                "is not representable as a 64-bit index"
            )
        self.n_sites = int(n_sites)
        self.n_excitations = int(n_excitations)
        self.dimension = dim
        self._states: np.ndarray | None = None
        self._occupations: np.ndarray | None = None

    def __repr__(self) -> str:
        return (
            f"SectorBasis(n_sites={self.n_sites}, n_excitations={self.n_excitations}, "
            f"dimension={self.dimension})"
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SectorBasis)
            and other.n_sites == self.n_sites
            and other.n_excitations == self.n_excitations
        )

    def __hash__(self) -> int:
        return hash((self.n_sites, self.n_excitations))

    @property
    def states(self) -> np.ndarray:
        """All sector states as an ascending int64 array (materialized on first use)."""
        if self._states is None:
            self._states = _enumerate_states(self.n_sites, self.n_excitations)
        return self._states

    def occupations(self) -> np.ndarray:
        """(dimension, n_sites) float array; entry [s, i] is bit i of state s."""
        if self._occupations is None:
            shifts = np.arange(self.n_sites, dtype=np.int64)
            self._occupations = ((self.states[:, None] >> shifts) & 1).astype(np.float64)
        return self._occupations

    def rank(self, state: int) -> int:
        """Index of ``state`` in the ordered basis, by combinadic evaluation.

        Raises ``ValueError`` when the popcount does not match the sector.
        """
        state = int(state)
        if state < 0 or state >= (1 << self.n_sites):
            raise ValueError(f"state {state} does not fit in {self.n_sites} bits")
        if state.bit_count() != self.n_excitations:
            raise ValueError(
                f"state {state:#b} has popcount {state.bit_count()}, "
                f"sector requires {self.n_excitations}"
            )
        r = 0
        t = 1
        for p in range(self.n_sites):
            if (state >> p) & 1:
                r += math.comb(p, t)
                t += 1
        return r

    def unrank(self, index: int) -> int:
        """State at position ``index``, inverse of :meth:`rank`."""
        index = int(index)
        if not 0 <= index < self.dimension:
            raise IndexError(f"index {index} out of range for dimension {self.dimension}")
        state = 0
        m = index
        p = self.n_sites - 1
        for t in range(self.n_excitations, 0, -1):
            while math.comb(p, t) > m:
                p -= 1
            m -= math.comb(p, t)
            state |= 1 << p
            p -= 1
        return state

    def index_of(self, states: np.ndarray) -> np.ndarray:
        """Vectorized rank lookup for an array of sector states.

        Uses binary search against the sorted state list; every input must
        belong to the sector.
        """
        idx = np.searchsorted(self.states, states)
        if np.any(idx >= self.dimension) or np.any(self.states[idx] != states):
            raise ValueError("input contains states outside the sector")
        return idx

    def bit_patterns(self) -> list[str]:
        """Bitstrings (site n_sites-1 leftmost, site 0 rightmost) for every state."""
        return [format(int(s), f"0{self.n_sites}b") for s in self.states]


def build_sector_basis(n_sites: int, n_excitations: int) -> SectorBasis:
    """Build the fixed-excitation sector basis; see :class:`SectorBasis`."""
    return SectorBasis(n_sites, n_excitations)


def _enumerate_states(n: int, k: int) -> np.ndarray:
    """All n-bit integers with popcount k, ascending (Gosper's hack)."""
    dim = math.comb(n, k)
    out = np.empty(dim, dtype=np.int64)
    if k == 0:
        out[0] = 0
        return out
    c = (1 << k) - 1
    limit = 1 << n
    for pos in range(dim):
        out[pos] = c
        u = c & -c
        v = c + u
        c = v | (((v ^ c) // u) >> 2)
        if c >= limit:
            break
    return out
