"""Quench-experiment protocol: energy-targeted initial states, ensemble runs.

The statistical averaging scheme for a deterministic potential: pick k
product states whose energies sit in a narrow window of the spectrum
(by default the center, epsilon = 0.5 +- 0.02), quench each one under the
same Hamiltonian, and aggregate the observable series with the standard
error of the mean over initializations.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import SectorBasis, build_sector_basis
from .evolve import KrylovConfig, ObservableSeries, TimeGrid, make_observers, run_quench
from .model import (
    ANGULAR_PER_MHZ,
    DeviceGraph,
    PotentialProfile,
    QuantumState,
    build_hamiltonian,
    product_state_energy,
)
from .spectral import energy_density, extremal_energies

__all__ = [
    "EnsembleSpec",
    "SelectionResult",
    "GammaResult",
    "EnsembleResult",
    "select_initial_states",
    "pairwise_hamming_histogram",
    "run_ensemble",
    "extract_subgraph",
    "aggregate_series",
]

ENUMERATION_LIMIT = 10**6  # filter the whole sector up to this dimension
PROPOSAL_CAP = 10**7  # rejection-sampling budget above it


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything needed to reproduce one ensemble run."""

    graph: DeviceGraph
    gammas_mhz: tuple[float, ...]
    k_states: int = 20
    epsilon_target: float = 0.5
    epsilon_tol: float = 0.02
    grid: TimeGrid = field(default_factory=TimeGrid.uniform)
    observables: tuple[str, ...] = ("hamming", "imbalance", "qfi")
    seed: int = 1234
    method: str = "auto"
    krylov: KrylovConfig = KrylovConfig()
    correlation_times_ns: tuple[float, ...] = ()
    n_excitations: int | None = None  # default: half filling
    initial_states: tuple[int, ...] | None = None  # bypass selection when given
    threads: int = 1

    def __post_init__(self):
        if self.k_states < 1:
            raise ValueError("k_states must be at least 1")
        if not 0.0 < self.epsilon_target < 1.0:
            raise ValueError("epsilon_target must lie strictly inside (0, 1)")
        if self.epsilon_tol <= 0.0:
            raise ValueError("epsilon_tol must be positive")
        object.__setattr__(self, "gammas_mhz", tuple(float(g) for g in self.gammas_mhz))
        object.__setattr__(self, "observables", tuple(self.observables))

    @property
    def excitations(self) -> int:
        return self.graph.n_sites // 2 if self.n_excitations is None else self.n_excitations

    def to_dict(self) -> dict:
        """Deterministic dict form used for config hashing and manifests."""
        return {
            "graph": {
                "n_sites": self.graph.n_sites,
                "edges": [[i, j, c] for i, j, c in self.graph.edges],
            },
            "gammas_mhz": list(self.gammas_mhz),
            "k_states": self.k_states,
            "epsilon_target": self.epsilon_target,
            "epsilon_tol": self.epsilon_tol,
            "times_ns": [float(t) for t in self.grid.times_ns],
            "observables": list(self.observables),
            "seed": self.seed,
            "method": self.method,
            "krylov": {
                "max_subspace_dim": self.krylov.max_subspace_dim,
                "step_dt_ns": self.krylov.step_dt_ns,
                "tolerance": self.krylov.tolerance,
            },
            "correlation_times_ns": list(self.correlation_times_ns),
            "n_excitations": self.excitations,
            "initial_states": None if self.initial_states is None else list(self.initial_states),
            "threads": self.threads,
        }


@dataclass(frozen=True)
class SelectionResult:
    """Audit trail of an energy-windowed initial-state draw."""

    states: tuple[int, ...]
    epsilons: tuple[float, ...]
    e_ground: float
    e_max: float
    n_qualifying: int | None  # None when found by rejection sampling
    mode: str  # enumeration | rejection | provided


def _sector_product_energies(basis: SectorBasis, potential: PotentialProfile) -> np.ndarray:
    """Diagonal energies of every sector state, streamed without the occupation matrix."""
    states = basis.states
    w = ANGULAR_PER_MHZ * potential.values()
    energies = np.zeros(states.size)
    for j in range(basis.n_sites):
        energies += w[j] * ((states >> j) & 1)
    return energies


def select_initial_states(
    basis: SectorBasis,
    graph: DeviceGraph,
    potential: PotentialProfile,
    epsilon_target: float,
    epsilon_tol: float,
    k: int,
    rng: np.random.Generator,
    extremes: tuple[float, float] | None = None,
) -> SelectionResult:
    """Draw k distinct product states with energy density inside the window.

    Sectors up to ``ENUMERATION_LIMIT`` states are filtered exhaustively and
    sampled uniformly without replacement; larger ones fall back to seeded
    rejection sampling capped at ``PROPOSAL_CAP`` proposals.
    """
    if extremes is None:
        extremes = extremal_energies(build_hamiltonian(graph, potential, basis))
    e_gs, e_max = extremes
    lo, hi = epsilon_target - epsilon_tol, epsilon_target + epsilon_tol

    if basis.dimension <= ENUMERATION_LIMIT:
        eps = energy_density(_sector_product_energies(basis, potential), e_gs, e_max)
        qualifying = np.nonzero((eps >= lo) & (eps <= hi))[0]
        if qualifying.size < k:
            raise ValueError(
                f"only {qualifying.size} product states fall inside "
                f"epsilon = {epsilon_target} +- {epsilon_tol}; requested {k}"
            )
        picked = rng.choice(qualifying, size=k, replace=False)
        states = tuple(int(basis.states[i]) for i in picked)
        chosen_eps = tuple(float(eps[i]) for i in picked)
        return SelectionResult(states, chosen_eps, e_gs, e_max, int(qualifying.size), "enumeration")

    w = ANGULAR_PER_MHZ * potential.values()
    found: dict[int, float] = {}
    for _ in range(PROPOSAL_CAP):
        sites = rng.choice(basis.n_sites, size=basis.n_excitations, replace=False)
        state = 0
        for s in sites:
            state |= 1 << int(s)
        if state in found:
            continue
        eps = float(energy_density(float(np.sum(w[sites])), e_gs, e_max))
        if lo <= eps <= hi:
            found[state] = eps
            if len(found) == k:
                return SelectionResult(
                    tuple(found), tuple(found.values()), e_gs, e_max, None, "rejection"
                )
    raise ValueError(
        f"rejection sampling found only {len(found)} of {k} states "
        f"within {PROPOSAL_CAP} proposals"
    )


def pairwise_hamming_histogram(states) -> tuple[np.ndarray, np.ndarray]:
    """Static bit-difference counts over all unordered pairs of bitstrings."""
    states = [int(s) for s in states]
    if len(states) < 2:
        raise ValueError("need at least two states for a pairwise histogram")
    max_bits = max(s.bit_length() for s in states)
    counts = np.zeros(max_bits + 1, dtype=np.int64)
    for a in range(len(states)):
        for b in range(a + 1, len(states)):
            counts[(states[a] ^ states[b]).bit_count()] += 1
    return np.arange(max_bits + 1), counts


def extract_subgraph(graph: DeviceGraph, sites) -> tuple[DeviceGraph, tuple]:
    """Induced subgraph on ``sites``, relabeled 0..m-1 in the given order.

    Returns the subgraph together with the dropped edges: original edges
    touching the subset that did not survive induction.
    """
    sites = [int(s) for s in sites]
    if not sites:
        raise ValueError("site subset must be nonempty")
    if len(set(sites)) != len(sites):
        raise ValueError("site subset contains duplicates")
    for s in sites:
        if not 0 <= s < graph.n_sites:
            raise ValueError(f"site {s} does not exist")
    relabel = {old: new for new, old in enumerate(sites)}
    kept = []
    dropped = []
    for i, j, c in graph.edges:
        if i in relabel and j in relabel:
            a, b = relabel[i], relabel[j]
            kept.append((min(a, b), max(a, b), c))
        elif i in relabel or j in relabel:
            dropped.append((i, j, c))
    return DeviceGraph(len(sites), tuple(kept)), tuple(dropped)


def aggregate_series(series_list: list[ObservableSeries]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-column mean and standard error of the mean across ensemble members.

    With a single member the standard error is undefined and reported as NaN.
    """
    if not series_list:
        raise ValueError("nothing to aggregate")
    k = len(series_list)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name in series_list[0].columns:
        stack = np.stack([s.columns[name] for s in series_list])
        mean = stack.mean(axis=0)
        if k > 1:
            stderr = stack.std(axis=0, ddof=1) / np.sqrt(k)
        else:
            stderr = np.full(mean.shape, np.nan)
        out[name] = (mean, stderr)
    return out


@dataclass(frozen=True)
class GammaResult:
    """Everything produced for one value of the tilt."""

    gamma_mhz: float
    potential: PotentialProfile
    selection: SelectionResult
    hamming_histogram: tuple[np.ndarray, np.ndarray]
    series: tuple[ObservableSeries, ...]
    aggregated: dict[str, tuple[np.ndarray, np.ndarray]]
    method: str


@dataclass(frozen=True)
class EnsembleResult:
    spec: EnsembleSpec
    per_gamma: tuple[GammaResult, ...]


def run_ensemble(spec: EnsembleSpec) -> EnsembleResult:
    """Select states, quench, and aggregate for every tilt value in the spec.

    Fully deterministic given the spec (the seed drives a per-gamma Philox
    stream); ensemble members run as independent jobs on a bounded thread
    pool with deterministic result ordering.
    """
    basis = build_sector_basis(spec.graph.n_sites, spec.excitations)
    child_seeds = np.random.SeedSequence(spec.seed).spawn(len(spec.gammas_mhz))
    results = []
    for idx, gamma in enumerate(spec.gammas_mhz):
        potential = PotentialProfile.stark(spec.graph.n_sites, gamma)
        h = build_hamiltonian(spec.graph, potential, basis)
        if spec.initial_states is not None:
            for s in spec.initial_states:
                if int(s).bit_count() != basis.n_excitations:
                    raise ValueError(f"provided state {s:#b} lies outside the sector")
            e_gs, e_max = extremal_energies(h)
            eps = tuple(
                float(energy_density(product_state_energy(int(s), potential, spec.graph), e_gs, e_max))
                for s in spec.initial_states
            )
            selection = SelectionResult(
                tuple(int(s) for s in spec.initial_states), eps, e_gs, e_max, None, "provided"
            )
        else:
            rng = np.random.Generator(np.random.Philox(child_seeds[idx]))
            selection = select_initial_states(
                basis,
                spec.graph,
                potential,
                spec.epsilon_target,
                spec.epsilon_tol,
                spec.k_states,
                rng,
            )

        def quench_one(s0: int) -> ObservableSeries:
            psi0 = QuantumState.from_bitstring(basis, s0)
            observers = make_observers(spec.observables, s0, basis, h)
            series = run_quench(
                h,
                psi0,
                spec.grid,
                observers,
                method=spec.method,
                krylov=spec.krylov,
                correlation_times_ns=spec.correlation_times_ns,
            )
            series.metadata["initial_state"] = s0
            series.metadata["gamma_mhz"] = gamma
            return series

        try:
            if spec.threads > 1:
                with ThreadPoolExecutor(max_workers=spec.threads) as pool:
                    series = tuple(pool.map(quench_one, selection.states))
            else:
                series = tuple(quench_one(s) for s in selection.states)
        except Exception as exc:
            raise RuntimeError(f"quench batch failed at gamma = {gamma} MHz: {exc}") from exc

        if len(selection.states) >= 2:
            histogram = pairwise_hamming_histogram(selection.states)
        else:
            histogram = (np.array([0]), np.array([0]))
        results.append(
            GammaResult(
                gamma_mhz=gamma,
                potential=potential,
                selection=selection,
                hamming_histogram=histogram,
                series=series,
                aggregated=aggregate_series(list(series)),
                method=series[0].metadata["method"],
            )
        )
    return EnsembleResult(spec, tuple(results))
