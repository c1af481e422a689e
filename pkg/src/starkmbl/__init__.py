"""Desk-scale Stark many-body localization toolkit.

Sector-restricted XY dynamics on an arbitrary coupling graph, with the
localization observables (Hamming distance, generalized imbalance, two-point
correlations, quantum Fisher information, Bloch-oscillation spectra) and the
spectral diagnostics (gap-ratio statistics, eigenstate expectation values,
overlap distributions, dipole fragmentation) used to characterize the
ergodic-to-localized crossover under a linear potential.
"""

__version__ = "0.1.0"

from .basis import SectorBasis, build_sector_basis
from .model import (
    DeviceGraph,
    PotentialProfile,
    QuantumState,
    SparseOperator,
    build_dipole_operator,
    build_hamiltonian,
    build_imbalance_operator,
    nearest_neighbor_chain,
    product_state_energy,
    triangular_ladder,
)

__all__ = [
    "SectorBasis",
    "build_sector_basis",
    "DeviceGraph",
    "PotentialProfile",
    "QuantumState",
    "SparseOperator",
    "build_dipole_operator",
    "build_hamiltonian",
    "build_imbalance_operator",
    "nearest_neighbor_chain",
    "product_state_energy",
    "triangular_ladder",
    "__version__",
]
