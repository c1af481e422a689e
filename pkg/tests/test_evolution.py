import numpy as np
import pytest

from starkmbl.basis import build_sector_basis
from starkmbl.evolve import (
    EnergyObserver,
    ImbalanceObserver,
    KrylovConfig,
    TimeGrid,
    evolve_exact,
    evolve_krylov,
    full_diagonalize,
    make_observers,
    run_quench,
)
from starkmbl.model import (
    DeviceGraph,
    PotentialProfile,
    QuantumState,
    SparseOperator,
    build_hamiltonian,
    triangular_ladder,
)

TWO_PI = 2.0 * np.pi


def two_site_problem(j_mhz=3.0):
    basis = build_sector_basis(2, 1)
    graph = DeviceGraph(2, ((0, 1, j_mhz),))
    h = build_hamiltonian(graph, PotentialProfile.explicit([0.0, 0.0]), basis)
    return basis, h


def ladder_problem(n, k, gamma, seed=7):
    basis = build_sector_basis(n, k)
    graph = triangular_ladder(n, seed=seed)
    h = build_hamiltonian(graph, PotentialProfile.stark(n, gamma), basis)
    return basis, h


def random_state(basis, seed=0):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(basis.dimension) + 1j * rng.standard_normal(basis.dimension)
    return QuantumState(basis, amps, normalize=True)


class TestTimeGrid:
    def test_uniform_grid(self):
        grid = TimeGrid.uniform(1000.0, 5.0)
        assert len(grid) == 201
        assert grid.times_ns[0] == 0.0 and grid.times_ns[-1] == 1000.0

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            TimeGrid(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.0, 2.0, 2.0]))

    def test_krylov_config_validation(self):
        with pytest.raises(ValueError):
            KrylovConfig(max_subspace_dim=1)
        with pytest.raises(ValueError):
            KrylovConfig(tolerance=0.0)


class TestFullDiagonalize:
    def test_two_level_eigenvalues(self):
        _, h = two_site_problem(3.0)
        eig = full_diagonalize(h)
        np.testing.assert_allclose(
            eig.eigenvalues, [-TWO_PI * 3.0, TWO_PI * 3.0], rtol=1e-14
        )

    def test_diagonal_operator_shortcut(self):
        basis = build_sector_basis(6, 3)
        diag = np.arange(basis.dimension)[::-1].astype(float)
        eig = full_diagonalize(SparseOperator(basis, diagonal=diag))
        np.testing.assert_array_equal(eig.eigenvalues, np.sort(diag))
        # permuted identity: columns are standard basis vectors
        assert np.all(np.sum(eig.eigenvectors != 0.0, axis=0) == 1)
        recon = eig.eigenvectors @ np.diag(eig.eigenvalues) @ eig.eigenvectors.T
        np.testing.assert_array_equal(recon, np.diag(diag))

    def test_eigensum_equals_trace(self):
        basis, h = ladder_problem(12, 6, 2.0)
        eig = full_diagonalize(h)
        trace = float(np.sum(h.diagonal()))
        assert np.sum(eig.eigenvalues) == pytest.approx(trace, rel=1e-10)

    def test_reconstruction_accuracy(self):
        basis, h = ladder_problem(10, 5, 3.0)
        eig = full_diagonalize(h)
        recon = (eig.eigenvectors * eig.eigenvalues) @ eig.eigenvectors.T
        scale = np.max(np.abs(eig.eigenvalues))
        assert np.max(np.abs(recon - h.to_dense())) <= 1e-8 * scale

    def test_dimension_cap(self):
        basis, h = ladder_problem(10, 5, 1.0)
        with pytest.raises(ValueError, match="Krylov"):
            full_diagonalize(h, cap=100)


class TestEvolveExact:
    def test_time_zero_identity(self):
        basis, h = ladder_problem(8, 4, 1.5)
        psi0 = random_state(basis)
        out = evolve_exact(full_diagonalize(h), psi0, 0.0)
        np.testing.assert_array_equal(out.amplitudes, psi0.amplitudes)

    def test_two_site_population_oscillates_at_twice_coupling(self):
        j = 3.0
        basis, h = two_site_problem(j)
        eig = full_diagonalize(h)
        psi0 = QuantumState.from_bitstring(basis, 0b01)
        idx = basis.rank(0b01)
        for t_ns in (0.0, 13.0, 50.0, 111.0):
            t_us = t_ns * 1e-3
            expected = np.cos(TWO_PI * j * t_us) ** 2
            p = abs(evolve_exact(eig, psi0, t_ns).amplitudes[idx]) ** 2
            assert p == pytest.approx(expected, abs=1e-12)

    def test_energy_conservation(self):
        basis, h = ladder_problem(10, 5, 4.0)
        eig = full_diagonalize(h)
        psi0 = random_state(basis, seed=3)
        e0 = h.expectation(psi0.amplitudes)
        for t in (50.0, 400.0, 1000.0):
            et = h.expectation(evolve_exact(eig, psi0, t).amplitudes)
            assert et == pytest.approx(e0, rel=1e-10)

    def test_norm_preserved(self):
        basis, h = ladder_problem(10, 5, 4.0)
        eig = full_diagonalize(h)
        psi = evolve_exact(eig, random_state(basis, 5), 777.0)
        assert abs(psi.norm() - 1.0) < 1e-12


class TestEvolveKrylov:
    def test_diagonal_hamiltonian_exact_phases(self):
        basis = build_sector_basis(8, 4)
        rng = np.random.default_rng(1)
        diag = TWO_PI * rng.uniform(-20, 20, basis.dimension)
        h = SparseOperator(basis, diagonal=diag)
        psi0 = random_state(basis, 2)
        dt = 2.0
        out = evolve_krylov(h, psi0, dt, KrylovConfig(tolerance=1e-12))
        expected = np.exp(-1j * diag * dt * 1e-3) * psi0.amplitudes
        assert np.max(np.abs(out.amplitudes - expected)) < 1e-10

    def test_matches_exact_on_ladder(self):
        basis, h = ladder_problem(12, 6, 2.0)
        eig = full_diagonalize(h)
        psi0 = QuantumState.from_bitstring(basis, int(basis.states[412]))
        cfg = KrylovConfig(tolerance=1e-12)
        state = psi0
        for step in range(25):
            state = evolve_krylov(h, state, 2.0, cfg)
        exact = evolve_exact(eig, psi0, 50.0)
        # global phase is physical here (same H, same t): compare amplitudes directly
        assert np.max(np.abs(state.amplitudes - exact.amplitudes)) < 1e-8

    def test_norm_drift_bounded_over_many_steps(self):
        basis, h = ladder_problem(10, 5, 8.0)
        cfg = KrylovConfig(tolerance=1e-10)
        info = []
        state = QuantumState.from_bitstring(basis, int(basis.states[100]))
        for _ in range(100):
            state = evolve_krylov(h, state, 2.0, cfg, info_out=info)
        drifts = [rec.norm_drift for rec in info]
        assert sum(drifts) <= 100 * cfg.tolerance
        assert abs(state.norm() - 1.0) < 1e-12

    def test_linearity(self):
        basis, h = ladder_problem(8, 4, 3.0)
        cfg = KrylovConfig(tolerance=1e-12)
        a, b = 0.6, 0.8j
        psi1 = random_state(basis, 7)
        psi2 = random_state(basis, 8)
        combined = QuantumState(basis, a * psi1.amplitudes + b * psi2.amplitudes, normalize=True)
        scale = np.linalg.norm(a * psi1.amplitudes + b * psi2.amplitudes)
        lhs = evolve_krylov(h, combined, 2.0, cfg).amplitudes
        rhs = (
            a * evolve_krylov(h, psi1, 2.0, cfg).amplitudes
            + b * evolve_krylov(h, psi2, 2.0, cfg).amplitudes
        ) / scale
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_time_composition(self):
        basis, h = ladder_problem(8, 4, 5.0)
        eig = full_diagonalize(h)
        psi0 = random_state(basis, 11)
        one = evolve_exact(eig, psi0, 120.0)
        two = evolve_exact(eig, evolve_exact(eig, psi0, 70.0), 50.0)
        assert np.max(np.abs(one.amplitudes - two.amplitudes)) < 1e-12

    def test_reversal_returns_initial_state(self):
        basis, h = ladder_problem(8, 4, 5.0)
        h_neg = SparseOperator(basis, matrix=-1.0 * h.matrix())
        cfg = KrylovConfig(tolerance=1e-12)
        psi0 = random_state(basis, 13)
        fwd = evolve_krylov(h, psi0, 2.0, cfg)
        back = evolve_krylov(h_neg, fwd, 2.0, cfg)
        assert np.max(np.abs(back.amplitudes - psi0.amplitudes)) < 1e-10

    def test_nonconvergence_raises_with_estimate(self):
        basis, h = ladder_problem(10, 5, 10.0)
        psi0 = random_state(basis, 17)
        with pytest.raises(RuntimeError, match="error estimate"):
            evolve_krylov(h, psi0, 100.0, KrylovConfig(max_subspace_dim=4, tolerance=1e-14))

    def test_rejects_nonpositive_dt(self):
        basis, h = two_site_problem()
        psi0 = QuantumState.from_bitstring(basis, 0b01)
        with pytest.raises(ValueError):
            evolve_krylov(h, psi0, 0.0)


class TestRunQuench:
    def test_empty_observer_set_gives_times_only(self):
        basis, h = ladder_problem(8, 4, 1.0)
        psi0 = QuantumState.from_bitstring(basis, int(basis.states[0]))
        series = run_quench(h, psi0, TimeGrid.uniform(50, 10), [])
        assert series.columns == {}
        assert len(series.times_ns) == 6

    def test_imbalance_starts_at_one(self):
        basis, h = ladder_problem(8, 4, 2.0)
        s0 = int(basis.states[17])
        psi0 = QuantumState.from_bitstring(basis, s0)
        series = run_quench(
            h, psi0, TimeGrid.uniform(100, 20), [ImbalanceObserver(s0, basis)]
        )
        assert series.column("imbalance")[0] == pytest.approx(1.0, abs=1e-12)

    def test_exact_and_krylov_backends_agree(self):
        basis, h = ladder_problem(10, 5, 3.0)
        s0 = int(basis.states[41])
        psi0 = QuantumState.from_bitstring(basis, s0)
        grid = TimeGrid.uniform(200, 10)
        obs = lambda: make_observers(["hamming", "imbalance", "qfi"], s0, basis, h)
        exact = run_quench(h, psi0, grid, obs(), method="exact")
        kry = run_quench(
            h, psi0, grid, obs(), method="krylov", krylov=KrylovConfig(tolerance=1e-12)
        )
        for name in ("hamming", "imbalance", "qfi"):
            assert np.max(np.abs(exact.column(name) - kry.column(name))) < 1e-8

    def test_energy_column_constant(self):
        basis, h = ladder_problem(10, 5, 6.0)
        psi0 = QuantumState.from_bitstring(basis, int(basis.states[99]))
        series = run_quench(
            h, psi0, TimeGrid.uniform(300, 50), [EnergyObserver(h)], method="krylov"
        )
        e = series.column("energy")
        assert np.max(np.abs(e - e[0])) <= 1e-8 * max(1.0, abs(e[0]))

    def test_correlation_snapshots_at_named_times(self):
        basis, h = ladder_problem(8, 4, 1.0)
        psi0 = QuantumState.from_bitstring(basis, int(basis.states[3]))
        series = run_quench(
            h, psi0, TimeGrid.uniform(100, 20), [], correlation_times_ns=(0.0, 100.0)
        )
        assert set(series.correlation_snapshots) == {0.0, 100.0}
        snap = series.correlation_snapshots[0.0]
        assert snap.shape == (8, 8)
        off_diag = snap - np.diag(np.diag(snap))
        assert np.max(np.abs(off_diag)) < 1e-12  # product state: no correlations

    def test_unknown_method_and_bad_snapshot_times(self):
        basis, h = ladder_problem(8, 4, 1.0)
        psi0 = QuantumState.from_bitstring(basis, int(basis.states[0]))
        grid = TimeGrid.uniform(10, 5)
        with pytest.raises(ValueError):
            run_quench(h, psi0, grid, [], method="tdvp")
        with pytest.raises(ValueError, match="not grid times"):
            run_quench(h, psi0, grid, [], correlation_times_ns=(3.0,))

    def test_unknown_observable_name(self):
        basis, _ = ladder_problem(8, 4, 1.0)
        with pytest.raises(ValueError, match="unknown observable"):
            make_observers(["entropy"], int(basis.states[0]), basis)
