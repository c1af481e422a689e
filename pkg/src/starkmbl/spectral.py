"""Spectral diagnostics: level statistics, eigenstate expectation values,
overlap distributions, and dipole fragmentation.

These are the tools that locate the ergodic-to-localized crossover in the
spectrum itself: gap-ratio statistics against the GOE and Poisson references,
the smoothness and size scaling of eigenstate expectation values, the energy
width an initial state spans, and the clustering of dipole expectations onto
integers deep in the tilted regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as sla

from .evolve import EigenDecomposition
from .model import QuantumState, SparseOperator

__all__ = [
    "GOE_MEAN_RATIO",
    "POISSON_MEAN_RATIO",
    "GapRatioStats",
    "EEVTable",
    "ScalingFit",
    "OverlapDistribution",
    "FragmentLabeling",
    "energy_density",
    "extremal_energies",
    "gap_ratio_statistics",
    "reference_distributions",
    "eev_table",
    "eev_fluctuations",
    "overlap_distribution",
    "initial_state_width",
    "classify_fragments",
]

GOE_MEAN_RATIO = 4.0 - 2.0 * np.sqrt(3.0)  # 0.5359...
POISSON_MEAN_RATIO = 2.0 * np.log(2.0) - 1.0  # 0.3863...


def energy_density(energy, e_ground: float, e_max: float):
    """Spectrum-normalized energy (E - E_GS) / (E_max - E_GS)."""
    width = e_max - e_ground
    if width <= 0:
        raise ValueError("spectrum width must be positive to define energy density")
    return (np.asarray(energy, dtype=np.float64) - e_ground) / width


def extremal_energies(
    h: SparseOperator, tol: float = 0.0, dense_cutoff: int = 512
) -> tuple[float, float]:
    """Ground-state and highest eigenvalue via Lanczos (dense below ``dense_cutoff``).

    The Lanczos residual is verified against 1e-8 * max|E|; non-convergence
    raises with the achieved residual.
    """
    if h.is_diagonal:
        diag = h.diagonal()
        return float(diag.min()), float(diag.max())
    if h.dimension <= dense_cutoff:
        evals = np.linalg.eigvalsh(h.to_dense())
        return float(evals[0]), float(evals[-1])
    matrix = h.matrix()
    results = []
    for which in ("SA", "LA"):
        try:
            val, vec = sla.eigsh(matrix, k=1, which=which, tol=tol, maxiter=10000)
        except sla.ArpackNoConvergence as exc:
            raise RuntimeError(f"Lanczos failed to converge for {which}: {exc}") from exc
        results.append((float(val[0]), vec[:, 0]))
    e_gs, v_gs = results[0]
    e_max, v_max = results[1]
    scale = max(abs(e_gs), abs(e_max), 1e-300)
    for e, v in results:
        residual = float(np.linalg.norm(matrix @ v - e * v))
        if residual > 1e-8 * scale:
            raise RuntimeError(
                f"extremal eigenpair residual {residual:g} exceeds {1e-8 * scale:g}"
            )
    return e_gs, e_max


@dataclass(frozen=True)
class GapRatioStats:
    """Ratios of adjacent level spacings with window-resolved means.

    ``window_means[i]`` is the mean ratio over ratios whose central level has
    energy density inside window ``i``; windows with no ratios are NaN and
    listed in ``skipped_windows``.  Gaps equal to zero (within
    ``degeneracy_tol`` of the call) invalidate their two adjacent ratios and
    are tallied in ``degenerate_gaps``.
    """

    ratios: np.ndarray
    mean: float
    window_edges: np.ndarray
    window_means: np.ndarray
    window_counts: np.ndarray
    skipped_windows: tuple[int, ...]
    degenerate_gaps: int
    histogram_density: np.ndarray
    histogram_edges: np.ndarray


def gap_ratio_statistics(
    eigenvalues: np.ndarray,
    window_width: float = 0.05,
    window_range: tuple[float, float] = (0.1, 0.9),
    degeneracy_tol: float = 0.0,
    histogram_bins: int = 25,
) -> GapRatioStats:
    """r_alpha = min(d_alpha, d_alpha+1) / max(d_alpha, d_alpha+1) over the sorted spectrum.

    Window means are resolved in energy density over ``window_range`` with
    bins of ``window_width``.
    """
    energies = np.sort(np.asarray(eigenvalues, dtype=np.float64))
    if energies.size < 3:
        raise ValueError("need at least 3 eigenvalues for gap ratios")
    gaps = np.diff(energies)
    degenerate = gaps <= degeneracy_tol
    left, right = gaps[:-1], gaps[1:]
    valid = ~(degenerate[:-1] | degenerate[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios_all = np.minimum(left, right) / np.maximum(left, right)
    ratios = ratios_all[valid]

    # each ratio sits at the central level of its three-level stencil
    eps = energy_density(energies[1:-1], energies[0], energies[-1])[valid]
    lo, hi = window_range
    n_windows = max(int(round((hi - lo) / window_width)), 1)
    edges = lo + window_width * np.arange(n_windows + 1)
    means = np.full(n_windows, np.nan)
    counts = np.zeros(n_windows, dtype=np.int64)
    skipped = []
    for i in range(n_windows):
        sel = (eps >= edges[i]) & (eps < edges[i + 1])
        counts[i] = int(np.sum(sel))
        if counts[i] == 0:
            skipped.append(i)
        else:
            means[i] = float(np.mean(ratios[sel]))
    density, hist_edges = np.histogram(ratios, bins=histogram_bins, range=(0.0, 1.0), density=True)
    return GapRatioStats(
        ratios=ratios,
        mean=float(np.mean(ratios)) if ratios.size else float("nan"),
        window_edges=edges,
        window_means=means,
        window_counts=counts,
        skipped_windows=tuple(skipped),
        degenerate_gaps=int(np.sum(degenerate)),
        histogram_density=density,
        histogram_edges=hist_edges,
    )


def reference_distributions(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """GOE and Poisson densities of the min/max gap ratio on [0, 1].

    Both are normalized to integrate to 1 over [0, 1]; their means are
    ``GOE_MEAN_RATIO`` and ``POISSON_MEAN_RATIO``.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("gap ratios live in [0, 1]")
    p_goe = (27.0 / 4.0) * (r + r**2) / (1.0 + r + r**2) ** 2.5
    p_poisson = 2.0 / (1.0 + r) ** 2
    return p_goe, p_poisson


@dataclass(frozen=True)
class EEVTable:
    """Eigenstate expectation values of one observable across the spectrum."""

    name: str
    eigenvalues: np.ndarray
    epsilons: np.ndarray  # energy densities in [0, 1]
    values: np.ndarray

    def central_window(self, lo: float = 0.4, hi: float = 0.6) -> "EEVTable":
        sel = (self.epsilons >= lo) & (self.epsilons <= hi)
        return EEVTable(self.name, self.eigenvalues[sel], self.epsilons[sel], self.values[sel])


def eev_table(eig: EigenDecomposition, operator: SparseOperator, name: str = "observable") -> EEVTable:
    """<alpha|O|alpha> for every eigenstate, tagged with its energy density."""
    v = eig.eigenvectors
    if operator.is_diagonal:
        values = (np.abs(v) ** 2).T @ operator.diagonal()
    else:
        values = np.einsum("ia,ia->a", v.conj(), operator.matvec(v)).real
    eps = energy_density(eig.eigenvalues, float(eig.eigenvalues[0]), float(eig.eigenvalues[-1]))
    return EEVTable(name, eig.eigenvalues.copy(), eps, values)


@dataclass(frozen=True)
class ScalingFit:
    """Power-law fit of mean consecutive-eigenstate fluctuations vs sector dimension."""

    exponent: float
    exponent_err: float
    dimensions: np.ndarray
    mean_fluctuations: np.ndarray
    flag: str | None = None


def eev_fluctuations(
    tables: list[tuple[int, EEVTable]],
    window: tuple[float, float] = (0.4, 0.6),
) -> ScalingFit:
    """Scaling exponent a of mean |EEV_alpha - EEV_alpha+1| with dimension N^a.

    ``tables`` pairs each sector dimension with the EEV table at that system
    size; the fluctuation average is restricted to the central spectrum
    ``window``.  Requires at least three sizes.  A constant observable gives
    zero fluctuations and is returned flagged instead of fitted.
    """
    if len(tables) < 3:
        raise ValueError("need at least 3 system sizes for a scaling fit")
    dims = np.array([d for d, _ in tables], dtype=np.float64)
    means = []
    scale = 0.0
    for _, table in tables:
        central = table.central_window(*window)
        if central.values.size < 2:
            raise ValueError("central window holds fewer than 2 eigenstates")
        means.append(float(np.mean(np.abs(np.diff(central.values)))))
        scale = max(scale, float(np.max(np.abs(central.values))))
    means = np.array(means)
    # fluctuations at the fp-noise floor of the operator scale carry no signal
    if np.any(means <= 1e-12 * max(scale, 1.0)):
        return ScalingFit(np.nan, np.nan, dims, means, flag="degenerate")
    coeffs, cov = np.polyfit(np.log(dims), np.log(means), 1, cov=True)
    return ScalingFit(float(coeffs[0]), float(np.sqrt(cov[0, 0])), dims, means)


@dataclass(frozen=True)
class OverlapDistribution:
    """|<alpha|psi_0>|^2 across the spectrum, with energy-density window sums."""

    epsilons: np.ndarray
    weights: np.ndarray

    def window_sums(self, edges: np.ndarray) -> np.ndarray:
        """Total overlap weight inside each [edges[i], edges[i+1]) window."""
        idx = np.clip(np.searchsorted(edges, self.epsilons, side="right") - 1, -1, len(edges) - 2)
        sums = np.zeros(len(edges) - 1)
        for i, w in zip(idx, self.weights):
            if 0 <= i:
                sums[i] += w
        return sums


def overlap_distribution(psi0: QuantumState, eig: EigenDecomposition) -> OverlapDistribution:
    """Eigenbasis weights of the initial state; they sum to 1 by unitarity."""
    weights = np.abs(eig.coefficients(psi0.amplitudes)) ** 2
    total = float(np.sum(weights))
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"overlap weights sum to {total:.12f}, state not normalized")
    eps = energy_density(eig.eigenvalues, float(eig.eigenvalues[0]), float(eig.eigenvalues[-1]))
    return OverlapDistribution(eps, weights)


def initial_state_width(h: SparseOperator, psi0: QuantumState) -> float:
    """Energy width sigma(E) = sqrt(<H^2> - <H>^2) from two sparse applications."""
    hpsi = h.matvec(psi0.amplitudes)
    e1 = float(np.vdot(psi0.amplitudes, hpsi).real)
    e2 = float(np.vdot(hpsi, hpsi).real)
    return float(np.sqrt(max(e2 - e1 * e1, 0.0)))


@dataclass(frozen=True)
class FragmentLabeling:
    """Integer dipole labels per eigenstate; unresolved states carry no label."""

    labels: np.ndarray  # int labels, meaningful where resolved
    resolved: np.ndarray  # bool mask
    dipole_values: np.ndarray

    @property
    def unresolved_fraction(self) -> float:
        return float(1.0 - np.mean(self.resolved))

    def fragments(self) -> dict[int, np.ndarray]:
        """Eigenstate indices grouped by integer dipole label."""
        out: dict[int, np.ndarray] = {}
        for label in np.unique(self.labels[self.resolved]):
            out[int(label)] = np.nonzero(self.resolved & (self.labels == label))[0]
        return out


def classify_fragments(
    eig: EigenDecomposition,
    dipole: SparseOperator,
    tolerance: float = 0.1,
) -> FragmentLabeling:
    """Label eigenstates by the nearest integer dipole expectation.

    A state is resolved when its dipole expectation sits within ``tolerance``
    of an integer; meaningful deep in the tilted regime where the dipole
    moment is (approximately) conserved.  At weak tilt most states are
    unresolved, which is reported rather than raised.
    """
    values = eev_table(eig, dipole, "dipole").values
    rounded = np.rint(values)
    resolved = np.abs(values - rounded) <= tolerance
    return FragmentLabeling(rounded.astype(np.int64), resolved, values)
