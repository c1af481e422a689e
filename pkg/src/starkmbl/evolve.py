"""Time evolution of sector states.

Small sectors are propagated through a full eigendecomposition; large ones
through short Lanczos (Krylov) steps of the matrix exponential with a local
error estimate per step.  ``run_quench`` drives either backend over a time
grid and samples a set of observables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import NS_TO_US, QuantumState, SparseOperator
from .observables import (
    imbalance_diagonal_moments,
    site_densities,
    two_point_correlations,
)
from .model import imbalance_weights
from .basis import bits_array

__all__ = [
    "EigenDecomposition",
    "TimeGrid",
    "KrylovConfig",
    "KrylovStepInfo",
    "ObservableSeries",
    "Observer",
    "DiagonalObserver",
    "HammingDistanceObserver",
    "ImbalanceObserver",
    "QFIObserver",
    "EnergyObserver",
    "SiteDensityObserver",
    "SigmaZObserver",
    "make_observers",
    "DEFAULT_EXACT_CAP",
    "full_diagonalize",
    "evolve_exact",
    "evolve_krylov",
    "run_quench",
]

DEFAULT_EXACT_CAP = 20_000
_AUTO_EXACT_DIM = 4096


@dataclass(frozen=True)
class EigenDecomposition:
    """Complete orthonormal eigenbasis of a Hermitian sector operator."""

    eigenvalues: np.ndarray  # ascending, rad/us
    eigenvectors: np.ndarray  # column alpha is the eigenvector of eigenvalues[alpha]

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    def coefficients(self, amplitudes: np.ndarray) -> np.ndarray:
        """Overlap coefficients <alpha|psi>."""
        return self.eigenvectors.conj().T @ amplitudes


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sample times in ns, starting at 0."""

    times_ns: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_ns, dtype=np.float64)
        object.__setattr__(self, "times_ns", t)
        if t.size == 0 or t[0] != 0.0:
            raise ValueError("time grid must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")

    @classmethod
    def uniform(cls, t_max_ns: float = 1000.0, dt_ns: float = 5.0) -> "TimeGrid":
        """Uniform grid 0..t_max at spacing dt (t_max rounded to a multiple of dt)."""
        n = int(round(t_max_ns / dt_ns))
        return cls(np.linspace(0.0, n * dt_ns, n + 1))

    def __len__(self) -> int:
        return self.times_ns.size


@dataclass(frozen=True)
class KrylovConfig:
    """Lanczos propagator knobs: subspace cap, substep length, local error bound."""

    max_subspace_dim: int = 30
    step_dt_ns: float = 2.0
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.max_subspace_dim < 2:
            raise ValueError("max_subspace_dim must be at least 2")
        if self.step_dt_ns <= 0 or self.tolerance <= 0:
            raise ValueError("step_dt_ns and tolerance must be positive")


@dataclass
class KrylovStepInfo:
    """Diagnostics of one Lanczos exponential step."""

    subspace_dim: int
    error_estimate: float
    norm_drift: float  # |norm - 1| before renormalization


def full_diagonalize(h: SparseOperator, cap: int = DEFAULT_EXACT_CAP) -> EigenDecomposition:
    """Dense eigendecomposition of the sector operator.

    Refuses dimensions above ``cap``; use the Krylov propagator there.
    Diagonal operators short-circuit to a sorted permutation of the identity.
    """
    if h.dimension > cap:
        raise ValueError(
            f"dimension {h.dimension} exceeds the exact-diagonalization cap {cap}; "
            "use the Krylov propagator instead"
        )
    if h.is_diagonal:
        diag = h.diagonal()
        order = np.argsort(diag, kind="stable")
        vectors = np.zeros((h.dimension, h.dimension))
        vectors[order, np.arange(h.dimension)] = 1.0
        return EigenDecomposition(diag[order], vectors)
    eigenvalues, eigenvectors = np.linalg.eigh(h.to_dense())
    return EigenDecomposition(eigenvalues, eigenvectors)


def evolve_exact(eig: EigenDecomposition, psi0: QuantumState, t_ns: float) -> QuantumState:
    """|psi_t> = sum_alpha e^{-i E_alpha t} <alpha|psi_0> |alpha>."""
    if t_ns < 0:
        raise ValueError("t must be nonnegative")
    if t_ns == 0:
        return QuantumState(psi0.basis, psi0.amplitudes.copy())
    coeff = eig.coefficients(psi0.amplitudes)
    phases = np.exp(-1j * eig.eigenvalues * (t_ns * NS_TO_US))
    return QuantumState(psi0.basis, eig.eigenvectors @ (phases * coeff))


def evolve_krylov(
    h: SparseOperator,
    psi: QuantumState,
    dt_ns: float,
    cfg: KrylovConfig = KrylovConfig(),
    info_out: list | None = None,
) -> QuantumState:
    """One Lanczos approximation of e^{-i H dt}|psi>, renormalized.

    The Krylov subspace grows until the local error estimate drops below
    ``cfg.tolerance``; exceeding ``cfg.max_subspace_dim`` first raises with
    the achieved estimate.  Appends a :class:`KrylovStepInfo` to ``info_out``
    when provided.  For steps much longer than ``cfg.step_dt_ns`` prefer
    :func:`run_quench`, which substeps.
    """
    if dt_ns <= 0:
        raise ValueError("dt must be positive")
    amps, step = _lanczos_expm(h, psi.amplitudes, dt_ns * NS_TO_US, cfg)
    if info_out is not None:
        info_out.append(step)
    return QuantumState(psi.basis, amps)


def _lanczos_expm(
    h: SparseOperator, amps: np.ndarray, tau_us: float, cfg: KrylovConfig
) -> tuple[np.ndarray, KrylovStepInfo]:
    dim = amps.size
    max_dim = min(cfg.max_subspace_dim, dim)
    vecs = np.empty((max_dim, dim), dtype=np.complex128)
    alphas: list[float] = []
    betas: list[float] = []

    vecs[0] = amps / np.linalg.norm(amps)
    w = h.matvec(vecs[0])
    alpha = float(np.vdot(vecs[0], w).real)
    alphas.append(alpha)
    w = w - alpha * vecs[0]

    scale = max(abs(alpha), 1.0)
    u_prev: np.ndarray | None = None
    for m in range(1, max_dim + 1):
        beta = float(np.linalg.norm(w))
        u = _tridiag_expm_e1(alphas, betas, tau_us)
        err = beta * abs(tau_us) * abs(u[-1])
        if u_prev is not None:
            err = max(err, float(np.linalg.norm(u - np.append(u_prev, 0.0))))
        happy = beta <= 1e-14 * scale
        if err <= cfg.tolerance or happy:
            out = vecs[:m].T @ u
            norm = float(np.linalg.norm(out))
            info = KrylovStepInfo(m, 0.0 if happy else err, abs(norm - 1.0))
            return out / norm, info
        if m == max_dim:
            raise RuntimeError(
                f"Krylov step failed to reach tolerance {cfg.tolerance:g} within "
                f"{max_dim} vectors; achieved error estimate {err:g}"
            )
        vecs[m] = w / beta
        w = h.matvec(vecs[m]) - beta * vecs[m - 1]
        alpha = float(np.vdot(vecs[m], w).real)
        w = w - alpha * vecs[m]
        # one full reorthogonalization pass keeps the basis orthonormal
        w = w - vecs[: m + 1].T @ (vecs[: m + 1].conj() @ w)
        alphas.append(alpha)
        betas.append(beta)
        scale = max(scale, abs(alpha), beta)
        u_prev = u
    raise AssertionError("unreachable")


def _tridiag_expm_e1(alphas: list[float], betas: list[float], tau_us: float) -> np.ndarray:
    """First column of exp(-i tau T) for the real symmetric tridiagonal T."""
    if len(alphas) == 1:
        return np.array([np.exp(-1j * tau_us * alphas[0])])
    evals, evecs = scipy.linalg.eigh_tridiagonal(alphas, betas)
    return evecs @ (np.exp(-1j * tau_us * evals) * evecs[0, :])


class Observer:
    """Named set of scalar columns sampled from the state at every grid time."""

    name: str
    columns: tuple[str, ...]

    def evaluate(self, state: QuantumState) -> np.ndarray:
        raise NotImplementedError


class DiagonalObserver(Observer):
    """Expectation of an arbitrary diagonal operator."""

    def __init__(self, name: str, operator: SparseOperator):
        if not operator.is_diagonal:
            raise ValueError("DiagonalObserver requires a diagonal operator")
        self.name = name
        self.columns = (name,)
        self._diag = operator.diagonal()

    def evaluate(self, state: QuantumState) -> np.ndarray:
        return np.array([state.probabilities() @ self._diag])


class HammingDistanceObserver(Observer):
    def __init__(self, initial_state: int, n_sites: int, name: str = "hamming"):
        self.name = name
        self.columns = (name,)
        self._s0 = 1.0 - 2.0 * bits_array(initial_state, n_sites)

    def evaluate(self, state: QuantumState) -> np.ndarray:
        sz = 1.0 - 2.0 * site_densities(state)
        return np.array([0.5 * (1.0 - float(np.mean(self._s0 * sz)))])


class ImbalanceObserver(Observer):
    def __init__(self, initial_state: int, basis, name: str = "imbalance"):
        self.name = name
        self.columns = (name,)
        lam = imbalance_weights(initial_state, basis.n_sites)
        self._diag = basis.occupations() @ lam

    def evaluate(self, state: QuantumState) -> np.ndarray:
        return np.array([state.probabilities() @ self._diag])


class QFIObserver(Observer):
    def __init__(self, initial_state: int, basis, name: str = "qfi"):
        self.name = name
        self.columns = (name,)
        lam = imbalance_weights(initial_state, basis.n_sites)
        self._diag = basis.occupations() @ lam

    def evaluate(self, state: QuantumState) -> np.ndarray:
        m1, m2 = imbalance_diagonal_moments(state.probabilities(), self._diag)
        return np.array([4.0 * (m2 - m1 * m1)])


class EnergyObserver(Observer):
    def __init__(self, h: SparseOperator, name: str = "energy"):
        self.name = name
        self.columns = (name,)
        self._h = h

    def evaluate(self, state: QuantumState) -> np.ndarray:
        return np.array([self._h.expectation(state.amplitudes)])


class SiteDensityObserver(Observer):
    def __init__(self, n_sites: int, name: str = "density"):
        self.name = name
        self.columns = tuple(f"n_{i}" for i in range(n_sites))

    def evaluate(self, state: QuantumState) -> np.ndarray:
        return site_densities(state)


class SigmaZObserver(Observer):
    def __init__(self, n_sites: int, name: str = "sigma_z"):
        self.name = name
        self.columns = tuple(f"sz_{i}" for i in range(n_sites))

    def evaluate(self, state: QuantumState) -> np.ndarray:
        return 1.0 - 2.0 * site_densities(state)


_OBSERVER_ALIASES = {"hd": "hamming", "igen": "imbalance", "fq": "qfi"}


def make_observers(
    names,
    initial_state: int,
    basis,
    hamiltonian: SparseOperator | None = None,
) -> list[Observer]:
    """Observers for the friendly names used by configs and the command line.

    Known names: hamming (hd), imbalance (igen), qfi (fq), energy, density,
    sigma_z.
    """
    observers: list[Observer] = []
    for raw in names:
        key = _OBSERVER_ALIASES.get(raw.lower(), raw.lower())
        if key == "hamming":
            observers.append(HammingDistanceObserver(initial_state, basis.n_sites))
        elif key == "imbalance":
            observers.append(ImbalanceObserver(initial_state, basis))
        elif key == "qfi":
            observers.append(QFIObserver(initial_state, basis))
        elif key == "energy":
            if hamiltonian is None:
                raise ValueError("energy observer needs the Hamiltonian")
            observers.append(EnergyObserver(hamiltonian))
        elif key == "density":
            observers.append(SiteDensityObserver(basis.n_sites))
        elif key == "sigma_z":
            observers.append(SigmaZObserver(basis.n_sites))
        else:
            raise ValueError(f"unknown observable {raw!r}")
    return observers


@dataclass
class ObservableSeries:
    """Observable time series on a grid, with run metadata.

    ``columns`` maps column name to a value per grid time.  Correlation
    snapshots, when requested, are stored apart from the scalar table as
    full matrices keyed by their sample time.
    """

    times_ns: np.ndarray
    columns: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    correlation_snapshots: dict[float, np.ndarray] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self, path) -> None:
        from .io import write_series_csv

        write_series_csv(path, self)

    def to_json(self, path) -> None:
        from .io import write_series_json

        write_series_json(path, self)


def run_quench(
    h: SparseOperator,
    psi0: QuantumState,
    grid: TimeGrid,
    observers: list[Observer],
    method: str = "auto",
    krylov: KrylovConfig = KrylovConfig(),
    eig: EigenDecomposition | None = None,
    correlation_times_ns=(),
    exact_cap: int = DEFAULT_EXACT_CAP,
) -> ObservableSeries:
    """Propagate ``psi0`` over the grid and sample every observer at each time.

    ``method`` is ``exact`` (eigendecomposition, computed once), ``krylov``
    (sequential substeps of at most ``krylov.step_dt_ns``), or ``auto``.
    Correlation matrices are captured at the grid times listed in
    ``correlation_times_ns``.
    """
    if method == "auto":
        method = "exact" if (eig is not None or h.dimension <= _AUTO_EXACT_DIM) else "krylov"
    if method not in ("exact", "krylov"):
        raise ValueError(f"unknown method {method!r}")
    psi0.check_normalized()

    times = grid.times_ns
    corr_times = set(float(t) for t in correlation_times_ns)
    unknown = corr_times - set(times.tolist())
    if unknown:
        raise ValueError(f"correlation times {sorted(unknown)} are not grid times")

    columns: dict[str, list[float]] = {c: [] for obs in observers for c in obs.columns}
    snapshots: dict[float, np.ndarray] = {}
    diagnostics: list[KrylovStepInfo] = []

    def sample(t: float, state: QuantumState) -> None:
        for obs in observers:
            vals = obs.evaluate(state)
            for c, v in zip(obs.columns, vals):
                columns[c].append(float(v))
        if t in corr_times:
            snapshots[t] = two_point_correlations(state).values

    if method == "exact":
        if eig is None:
            eig = full_diagonalize(h, cap=exact_cap)
        for t in times:
            sample(float(t), evolve_exact(eig, psi0, float(t)) if t > 0 else psi0)
    else:
        state = psi0
        sample(float(times[0]), state)
        for t_prev, t_next in zip(times[:-1], times[1:]):
            span = float(t_next - t_prev)
            n_sub = max(1, int(np.ceil(span / krylov.step_dt_ns - 1e-12)))
            dt = span / n_sub
            for _ in range(n_sub):
                state = evolve_krylov(h, state, dt, krylov, info_out=diagnostics)
            sample(float(t_next), state)

    metadata = {
        "method": method,
        "n_sites": psi0.basis.n_sites,
        "n_excitations": psi0.basis.n_excitations,
        "dimension": h.dimension,
    }
    if method == "krylov":
        metadata["krylov"] = {
            "max_subspace_dim": krylov.max_subspace_dim,
            "step_dt_ns": krylov.step_dt_ns,
            "tolerance": krylov.tolerance,
            "steps": len(diagnostics),
            "max_error_estimate": max((d.error_estimate for d in diagnostics), default=0.0),
            "max_norm_drift": max((d.norm_drift for d in diagnostics), default=0.0),
        }
    return ObservableSeries(
        times_ns=times.copy(),
        columns={c: np.asarray(v) for c, v in columns.items()},
        metadata=metadata,
        correlation_snapshots=snapshots,
    )
