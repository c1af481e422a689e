import numpy as np
import pytest
import scipy.sparse as sparse
from scipy.integrate import quad

from starkmbl.basis import build_sector_basis
from starkmbl.evolve import full_diagonalize
from starkmbl.model import (
    DeviceGraph,
    PotentialProfile,
    QuantumState,
    SparseOperator,
    build_dipole_operator,
    build_hamiltonian,
    build_imbalance_operator,
    triangular_ladder,
)
from starkmbl.spectral import (
    GOE_MEAN_RATIO,
    POISSON_MEAN_RATIO,
    classify_fragments,
    eev_fluctuations,
    eev_table,
    energy_density,
    extremal_energies,
    gap_ratio_statistics,
    initial_state_width,
    overlap_distribution,
    reference_distributions,
)

TWO_PI = 2.0 * np.pi


def ladder_problem(n, k, gamma, seed=7):
    basis = build_sector_basis(n, k)
    graph = triangular_ladder(n, seed=seed)
    h = build_hamiltonian(graph, PotentialProfile.stark(n, gamma), basis)
    return basis, h


def random_state(basis, seed=0):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(basis.dimension) + 1j * rng.standard_normal(basis.dimension)
    return QuantumState(basis, amps, normalize=True)


class TestEnergyDensity:
    def test_endpoints_and_midpoint(self):
        assert energy_density(-3.0, -3.0, 5.0) == 0.0
        assert energy_density(5.0, -3.0, 5.0) == 1.0
        assert energy_density(1.0, -3.0, 5.0) == 0.5

    def test_degenerate_width_rejected(self):
        with pytest.raises(ValueError):
            energy_density(0.0, 2.0, 2.0)


class TestExtremalEnergies:
    def test_two_level(self):
        basis = build_sector_basis(2, 1)
        h = build_hamiltonian(
            DeviceGraph(2, ((0, 1, 3.0),)), PotentialProfile.explicit([0.0, 0.0]), basis
        )
        e_gs, e_max = extremal_energies(h)
        assert e_gs == pytest.approx(-TWO_PI * 3.0, rel=1e-10)
        assert e_max == pytest.approx(TWO_PI * 3.0, rel=1e-10)

    def test_diagonal_shortcut(self):
        basis = build_sector_basis(6, 3)
        diag = np.linspace(-4.0, 9.0, basis.dimension)
        h = SparseOperator(basis, diagonal=diag)
        assert extremal_energies(h) == (-4.0, 9.0)

    def test_matches_full_diagonalization(self):
        basis, h = ladder_problem(12, 6, 2.0)
        eig = full_diagonalize(h)
        e_gs, e_max = extremal_energies(h)
        assert e_gs == pytest.approx(float(eig.eigenvalues[0]), abs=1e-8)
        assert e_max == pytest.approx(float(eig.eigenvalues[-1]), abs=1e-8)


class TestGapRatios:
    def test_equally_spaced_spectrum_gives_unit_ratios(self):
        stats = gap_ratio_statistics(np.arange(50.0))
        np.testing.assert_allclose(stats.ratios, 1.0)
        assert stats.mean == pytest.approx(1.0)

    def test_reference_means_to_four_decimals(self):
        assert GOE_MEAN_RATIO == pytest.approx(0.5359, abs=5e-5)
        assert POISSON_MEAN_RATIO == pytest.approx(0.3863, abs=5e-5)

    def test_densities_normalized_and_endpoints(self):
        p_goe, p_poisson = reference_distributions(np.array([0.0]))
        assert p_poisson[0] == 2.0
        assert p_goe[0] == 0.0
        for density in (
            lambda r: reference_distributions(np.atleast_1d(r))[0][0],
            lambda r: reference_distributions(np.atleast_1d(r))[1][0],
        ):
            val, _ = quad(density, 0.0, 1.0)
            assert val == pytest.approx(1.0, abs=1e-6)

    def test_poisson_mean_from_quadrature(self):
        mean, _ = quad(lambda r: r * reference_distributions(np.atleast_1d(r))[1][0], 0.0, 1.0)
        assert mean == pytest.approx(2.0 * np.log(2.0) - 1.0, abs=1e-9)

    def test_invariance_under_affine_spectrum_maps(self):
        rng = np.random.default_rng(5)
        energies = np.cumsum(rng.exponential(1.0, 200))
        base = gap_ratio_statistics(energies)
        mapped = gap_ratio_statistics(3.7 * energies - 11.0)
        # exact identity up to fp rounding of the affine map on small gaps
        np.testing.assert_allclose(mapped.ratios, base.ratios, rtol=1e-8)

    def test_degenerate_gaps_dropped_and_counted(self):
        energies = np.array([0.0, 1.0, 1.0, 2.0, 4.0, 5.0])
        stats = gap_ratio_statistics(energies)
        assert stats.degenerate_gaps == 1
        # gaps: 1, 0, 1, 2, 1 -> ratios at stencils without the zero gap: (1,2), (2,1)
        np.testing.assert_allclose(np.sort(stats.ratios), [0.5, 0.5])

    def test_window_means_and_skipped_windows(self):
        energies = np.concatenate([np.linspace(0, 1, 30), [5.0]])  # empty upper windows
        stats = gap_ratio_statistics(energies, window_width=0.2, window_range=(0.0, 1.0))
        assert len(stats.window_means) == 5
        assert stats.skipped_windows  # upper region has no ratio stencils
        assert np.isnan(stats.window_means[-1])

    def test_out_of_range_ratio_input_rejected(self):
        with pytest.raises(ValueError):
            reference_distributions(np.array([1.5]))
        with pytest.raises(ValueError):
            gap_ratio_statistics(np.array([0.0, 1.0]))


class TestEEV:
    def test_identity_operator(self):
        basis, h = ladder_problem(8, 4, 2.0)
        eig = full_diagonalize(h)
        table = eev_table(eig, SparseOperator(basis, diagonal=np.ones(basis.dimension)))
        np.testing.assert_allclose(table.values, 1.0, atol=1e-12)

    def test_hamiltonian_operator_reproduces_eigenvalues(self):
        basis, h = ladder_problem(8, 4, 2.0)
        eig = full_diagonalize(h)
        table = eev_table(eig, h)
        np.testing.assert_allclose(table.values, eig.eigenvalues, atol=1e-8)

    def test_epsilons_in_unit_interval(self):
        basis, h = ladder_problem(10, 5, 4.0)
        table = eev_table(full_diagonalize(h), build_dipole_operator(basis))
        assert table.epsilons.min() == 0.0 and table.epsilons.max() == 1.0

    def test_deep_tilt_dipole_values_cluster_near_integers(self):
        basis, h = ladder_problem(12, 6, 40.0)
        table = eev_table(full_diagonalize(h), build_dipole_operator(basis))
        central = table.central_window(0.3, 0.7)
        offsets = np.abs(central.values - np.rint(central.values))
        assert np.median(offsets) < 0.05

    def test_fluctuation_scaling_requires_three_sizes(self):
        basis, h = ladder_problem(8, 4, 2.0)
        table = eev_table(full_diagonalize(h), build_dipole_operator(basis))
        with pytest.raises(ValueError):
            eev_fluctuations([(basis.dimension, table)] * 2)

    def test_constant_operator_flagged_degenerate(self):
        tables = []
        for n in (8, 10, 12):
            basis, h = ladder_problem(n, n // 2, 2.0)
            eig = full_diagonalize(h)
            op = SparseOperator(basis, diagonal=np.full(basis.dimension, 3.0))
            tables.append((basis.dimension, eev_table(eig, op)))
        fit = eev_fluctuations(tables)
        assert fit.flag == "degenerate"
        assert np.isnan(fit.exponent)


class TestOverlapsAndWidth:
    def test_eigenstate_gives_single_unit_weight(self):
        basis, h = ladder_problem(8, 4, 2.0)
        eig = full_diagonalize(h)
        psi = QuantumState(basis, eig.eigenvectors[:, 5].astype(complex))
        dist = overlap_distribution(psi, eig)
        assert dist.weights[5] == pytest.approx(1.0, abs=1e-12)
        assert np.sum(dist.weights) == pytest.approx(1.0, abs=1e-12)

    def test_uncoupled_hamiltonian_product_state_single_weight(self):
        basis = build_sector_basis(6, 3)
        h = build_hamiltonian(
            DeviceGraph(6, ()), PotentialProfile.random(6, 3.0, seed=2), basis
        )
        eig = full_diagonalize(h)
        psi = QuantumState.from_bitstring(basis, int(basis.states[7]))
        weights = overlap_distribution(psi, eig).weights
        assert np.max(weights) == pytest.approx(1.0, abs=1e-12)
        assert np.sum(weights > 1e-12) == 1

    def test_completeness_for_random_states(self):
        basis, h = ladder_problem(9, 4, 3.0)
        eig = full_diagonalize(h)
        for seed in range(3):
            dist = overlap_distribution(random_state(basis, seed), eig)
            assert np.sum(dist.weights) == pytest.approx(1.0, abs=1e-10)

    def test_window_sums_partition_total_weight(self):
        basis, h = ladder_problem(9, 4, 3.0)
        eig = full_diagonalize(h)
        dist = overlap_distribution(random_state(basis, 9), eig)
        sums = dist.window_sums(np.linspace(0.0, 1.0 + 1e-12, 11))
        assert np.sum(sums) == pytest.approx(1.0, abs=1e-10)

    def test_width_zero_for_eigenstate(self):
        basis, h = ladder_problem(8, 4, 2.0)
        eig = full_diagonalize(h)
        psi = QuantumState(basis, eig.eigenvectors[:, 3].astype(complex))
        # zero up to the sqrt of the <H^2> cancellation noise
        scale = float(np.max(np.abs(eig.eigenvalues)))
        assert initial_state_width(h, psi) <= 1e-7 * scale

    def test_width_zero_for_product_state_of_diagonal_h(self):
        basis = build_sector_basis(6, 3)
        h = build_hamiltonian(
            DeviceGraph(6, ()), PotentialProfile.stark(6, 5.0), basis
        )
        psi = QuantumState.from_bitstring(basis, int(basis.states[4]))
        assert initial_state_width(h, psi) == 0.0

    def test_width_invariant_under_energy_shift(self):
        basis, h = ladder_problem(9, 4, 3.0)
        psi = random_state(basis, 31)
        shifted = SparseOperator(
            basis,
            matrix=(h.matrix() + 17.0 * np.pi * sparse.eye(basis.dimension)).tocsr(),
        )
        a = initial_state_width(h, psi)
        b = initial_state_width(shifted, psi)
        assert a == pytest.approx(b, abs=1e-8)

    def test_two_route_width_identity(self):
        basis, h = ladder_problem(12, 6, 2.0)
        eig = full_diagonalize(h)
        for seed in range(5):
            psi = random_state(basis, seed)
            direct = initial_state_width(h, psi)
            weights = np.abs(eig.coefficients(psi.amplitudes)) ** 2
            e_mean = float(weights @ eig.eigenvalues)
            via_eig = float(np.sqrt(weights @ (eig.eigenvalues - e_mean) ** 2))
            assert direct == pytest.approx(via_eig, abs=1e-8)


class TestFragments:
    def test_no_hopping_every_state_integer_labeled(self):
        basis = build_sector_basis(8, 4)
        h = build_hamiltonian(
            DeviceGraph(8, ()), PotentialProfile.stark(8, 4.0), basis
        )
        labeling = classify_fragments(full_diagonalize(h), build_dipole_operator(basis))
        assert labeling.unresolved_fraction == 0.0
        dipole = build_dipole_operator(basis).diagonal()
        assert set(labeling.labels) == set(int(v) for v in dipole)

    def test_zero_tilt_mostly_unresolved(self):
        basis, h = ladder_problem(10, 5, 0.0)
        labeling = classify_fragments(full_diagonalize(h), build_dipole_operator(basis))
        assert labeling.unresolved_fraction > 0.5

    def test_deep_tilt_fragments_resolve(self):
        basis, h = ladder_problem(12, 6, 40.0)
        labeling = classify_fragments(full_diagonalize(h), build_dipole_operator(basis))
        assert labeling.unresolved_fraction < 0.2
        frags = labeling.fragments()
        assert sum(idx.size for idx in frags.values()) == int(np.sum(labeling.resolved))
