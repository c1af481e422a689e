"""Dynamical observables of a sector state.

Everything here is a pure function of the amplitudes: site densities and the
quantities built from them (Hamming distance, generalized imbalance, quantum
Fisher information), two-point density correlations with their
distance-resolved exponential fit, and Fourier spectra of local oscillations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .basis import bits_array
from .model import QuantumState, imbalance_weights

__all__ = [
    "CorrelationMatrix",
    "BinnedCorrelations",
    "FitResult",
    "FourierSpectrum",
    "site_densities",
    "sigma_z_values",
    "hamming_distance",
    "generalized_imbalance",
    "quantum_fisher_information",
    "imbalance_diagonal_moments",
    "two_point_correlations",
    "distance_binned_correlations",
    "fit_correlation_length",
    "sigma_z_series_fourier",
]

_RANGE_TOL = 1e-9


def site_densities(state: QuantumState) -> np.ndarray:
    """Expectation <n_i> per site; sums exactly to the sector excitation count."""
    return state.basis.occupations().T @ state.probabilities()


def sigma_z_values(state: QuantumState) -> np.ndarray:
    """<sigma_i^z> per site, +1 on an empty site (n_i = (1 - sigma_i^z)/2)."""
    return 1.0 - 2.0 * site_densities(state)


def hamming_distance(state: QuantumState, initial_state: int) -> float:
    """Normalized expected number of occupation flips relative to a product state.

    0 on the initial state itself, 0.5 when every site has relaxed to
    <n_i> = 1/2, and 1 on the bitwise complement.
    """
    bits = bits_array(initial_state, state.basis.n_sites)
    s0 = 1.0 - 2.0 * bits
    value = 0.5 * (1.0 - float(np.mean(s0 * sigma_z_values(state))))
    return _check_range(value, 0.0, 1.0, "Hamming distance")


def generalized_imbalance(state: QuantumState, initial_state: int) -> float:
    """Density-pattern overlap with the initial state: 1 at t=0, 0 at thermal equilibrium."""
    lam = imbalance_weights(initial_state, state.basis.n_sites)
    value = float(lam @ site_densities(state))
    return _check_range(value, -1.0, 1.0, "generalized imbalance")


def imbalance_diagonal_moments(
    probabilities: np.ndarray, imbalance_diagonal: np.ndarray
) -> tuple[float, float]:
    """First and second moments of a diagonal imbalance operator."""
    m1 = float(probabilities @ imbalance_diagonal)
    m2 = float(probabilities @ imbalance_diagonal**2)
    return m1, m2


def quantum_fisher_information(state: QuantumState, initial_state: int) -> float:
    """4 x variance of the generalized imbalance, an entanglement witness."""
    lam = imbalance_weights(initial_state, state.basis.n_sites)
    diag = state.basis.occupations() @ lam
    m1, m2 = imbalance_diagonal_moments(state.probabilities(), diag)
    value = 4.0 * (m2 - m1 * m1)
    if value < -_RANGE_TOL:
        raise ValueError(f"negative QFI {value:g}: inconsistent state")
    return max(value, 0.0)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric |<n_i n_j> - <n_i><n_j>| matrix; the diagonal holds on-site variances."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.allclose(v, v.T, atol=1e-12, rtol=0.0):
            raise ValueError("correlation matrix must be symmetric")
        if v.min() < -_RANGE_TOL or v.max() > 0.25 + _RANGE_TOL:
            raise ValueError("correlation entries must lie in [0, 0.25]")

    @property
    def n_sites(self) -> int:
        return self.values.shape[0]


def two_point_correlations(state: QuantumState) -> CorrelationMatrix:
    """C(i,j) = |<n_i n_j> - <n_i><n_j>| from a single pass over the amplitudes."""
    occ = state.basis.occupations()
    probs = state.probabilities()
    nn = occ.T @ (occ * probs[:, None])  # <n_i n_j>, n_i n_j diagonal in this basis
    dens = occ.T @ probs
    cov = np.abs(nn - np.outer(dens, dens))
    cov = 0.5 * (cov + cov.T)  # remove last-bit asymmetry from summation order
    return CorrelationMatrix(cov)


@dataclass(frozen=True)
class BinnedCorrelations:
    """Mean correlation over all site pairs at each separation |i - j|."""

    distances: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray


def distance_binned_correlations(corr: CorrelationMatrix) -> BinnedCorrelations:
    """Average C(i,j) over pairs with |i-j| = dx, dx = 1 .. N-1 (diagonal excluded)."""
    n = corr.n_sites
    if n < 2:
        raise ValueError("need at least two sites to bin by distance")
    values = corr.values
    distances = np.arange(1, n, dtype=np.int64)
    mean = np.empty(n - 1)
    stderr = np.empty(n - 1)
    counts = np.empty(n - 1, dtype=np.int64)
    for d in distances:
        pairs = np.array([values[i, i + d] for i in range(n - d)])
        counts[d - 1] = pairs.size
        mean[d - 1] = pairs.mean()
        stderr[d - 1] = (
            pairs.std(ddof=1) / np.sqrt(pairs.size) if pairs.size > 1 else 0.0
        )
    return BinnedCorrelations(distances, mean, stderr, counts)


@dataclass(frozen=True)
class FitResult:
    """Exponential-decay fit A*exp(-dx/xi) + C0 of distance-binned correlations."""

    xi: float
    xi_err: float
    amplitude: float
    offset: float
    covariance: np.ndarray | None
    residual: float
    converged: bool
    flag: str | None = None


def fit_correlation_length(binned: BinnedCorrelations) -> FitResult:
    """Unweighted least squares of A*exp(-dx/xi) + C0 over the distance bins.

    Degenerate inputs (flat data) and fits that run into the xi bounds are
    returned flagged rather than raised, so scans over many snapshots can
    proceed and report.
    """
    x = np.asarray(binned.distances, dtype=np.float64)
    y = np.asarray(binned.mean, dtype=np.float64)
    good = np.isfinite(y)
    x, y = x[good], y[good]
    if x.size < 4:
        raise ValueError("need at least 4 finite distance bins to fit")
    n_sites = int(binned.distances.max()) + 1
    xi_max = 10.0 * n_sites

    if np.ptp(y) < 1e-12:
        return FitResult(
            np.nan, np.nan, 0.0, float(y.mean()), None, 0.0, False, "degenerate"
        )

    def decay(dx, amplitude, xi, offset):
        return amplitude * np.exp(-dx / xi) + offset

    p0 = (max(float(y[0] - y.min()), 1e-4), max((x.max() - x.min()) / 3.0, 0.5), float(y.min()))
    try:
        popt, pcov = curve_fit(
            decay,
            x,
            y,
            p0=p0,
            bounds=([0.0, 1e-6, -0.25], [4.0, xi_max, 0.25]),
            maxfev=10000,
        )
    except RuntimeError:
        return FitResult(np.nan, np.nan, np.nan, np.nan, None, np.nan, False, "no-convergence")
    amplitude, xi, offset = (float(v) for v in popt)
    residual = float(np.sqrt(np.mean((decay(x, *popt) - y) ** 2)))
    xi_err = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else np.nan
    flag = None
    if xi >= 0.999 * xi_max or xi <= 2e-6:
        flag = "bounds"
    return FitResult(xi, xi_err, amplitude, offset, pcov, residual, flag is None, flag)


@dataclass(frozen=True)
class FourierSpectrum:
    """Amplitude spectrum of local-observable oscillations, per qubit and averaged."""

    frequencies_mhz: np.ndarray
    mean_amplitude: np.ndarray
    per_qubit: np.ndarray  # shape (n_qubits, n_frequencies)

    @property
    def resolution_mhz(self) -> float:
        return float(self.frequencies_mhz[1] - self.frequencies_mhz[0])

    def peak_frequency(self, fmin_mhz: float = 0.0) -> float:
        """Frequency of the largest averaged amplitude at or above ``fmin_mhz``."""
        sel = self.frequencies_mhz >= fmin_mhz
        k = int(np.argmax(self.mean_amplitude[sel]))
        return float(self.frequencies_mhz[sel][k])


def sigma_z_series_fourier(
    times_ns: np.ndarray,
    signals: np.ndarray,
    window: tuple[float, float] | None = None,
    detrend: str = "mean",
) -> FourierSpectrum:
    """Per-qubit amplitude spectrum of <sigma_z>(t) on a uniform time grid.

    ``signals`` has one column per qubit.  The signal is mean-subtracted by
    default (``detrend="mean"``); amplitudes are normalized so a pure tone of
    unit amplitude yields 1 in its bin.  Frequency resolution is the inverse
    of the window length n*dt.
    """
    times_ns = np.asarray(times_ns, dtype=np.float64)
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim == 1:
        signals = signals[:, None]
    if signals.shape[0] != times_ns.size:
        raise ValueError("signals and times disagree in length")
    if window is not None:
        sel = (times_ns >= window[0]) & (times_ns <= window[1])
        times_ns, signals = times_ns[sel], signals[sel]
    if times_ns.size < 2:
        raise ValueError("need at least two samples")
    steps = np.diff(times_ns)
    dt = steps[0]
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("Fourier analysis requires a uniform time grid")
    if detrend == "mean":
        signals = signals - signals.mean(axis=0, keepdims=True)
    elif detrend != "none":
        raise ValueError(f"unknown detrend mode {detrend!r}")
    n = times_ns.size
    spectrum = np.fft.rfft(signals, axis=0)
    scale = np.full(spectrum.shape[0], 2.0 / n)
    scale[0] = 1.0 / n
    if n % 2 == 0:
        scale[-1] = 1.0 / n
    amplitudes = np.abs(spectrum) * scale[:, None]
    freqs_mhz = np.fft.rfftfreq(n, d=dt) * 1e3  # cycles/ns -> MHz
    return FourierSpectrum(freqs_mhz, amplitudes.mean(axis=1), amplitudes.T)


def _check_range(value: float, lo: float, hi: float, label: str) -> float:
    if value < lo - _RANGE_TOL or value > hi + _RANGE_TOL:
        raise ValueError(f"{label} {value:g} outside [{lo}, {hi}]")
    return min(max(value, lo), hi)
