"""Command-line front end.

Subcommands drive the standard pipelines: ``quench`` (ensemble relaxation
dynamics), ``spectrum`` (level statistics, EEVs, overlaps, fragments),
``bloch`` (deep-tilt single-state oscillations and their Fourier spectrum),
``select-states`` (energy-window audit), ``selftest`` (quick built-in
cross-checks).  Results go to files under the output directory; stdout only
carries a one-line summary.  Exit codes: 0 success, 2 configuration error,
3 physics/validation error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import build_sector_basis
from .evolve import KrylovConfig, TimeGrid, full_diagonalize, make_observers, run_quench
from .io import (
    ConfigError,
    config_hash,
    gamma_tag,
    load_device_config,
    parse_device_config,
    write_ensemble_result,
    write_long_csv,
    write_manifest,
    write_series_csv,
    write_spectrum_csv,
    write_table_csv,
)
from .model import (
    DeviceGraph,
    PotentialProfile,
    QuantumState,
    build_dipole_operator,
    build_hamiltonian,
    build_imbalance_operator,
    triangular_ladder,
)
from .observables import sigma_z_series_fourier
from .protocol import EnsembleSpec, pairwise_hamming_histogram, run_ensemble, select_initial_states
from .spectral import (
    classify_fragments,
    eev_fluctuations,
    eev_table,
    gap_ratio_statistics,
    overlap_distribution,
    reference_distributions,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_IO = 4

OUT_DIR_ENV = "STARKMBL_OUT_DIR"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starkmbl",
        description="Tilted-potential localization experiments on an XY coupling graph.",
    )
    parser.add_argument("--version", action="version", version=f"starkmbl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out-dir", type=Path, help=f"output directory (default from ${OUT_DIR_ENV})")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--threads", type=int, help="worker pool size for ensemble members")
        p.add_argument("--method", choices=["auto", "exact", "krylov"], help="propagator")
        p.add_argument("--n-sites", type=int, help="sites of the default ladder when no device given")
        p.add_argument("--no-plots", action="store_true", help="write data files only")

    p = sub.add_parser("quench", help="ensemble relaxation dynamics vs tilt")
    add_common(p)
    p.add_argument("--gamma", type=_float_list, help="tilt values in MHz, e.g. 1,5,8")
    p.add_argument("--observables", type=_str_list, help="e.g. hd,imbalance,qfi")
    p.add_argument("--k", type=int, help="number of initial states")
    p.add_argument("--t-max", type=float, help="final time in ns")
    p.add_argument("--dt", type=float, help="sampling step in ns")
    p.set_defaults(func=cmd_quench)

    p = sub.add_parser("spectrum", help="level statistics, EEVs, overlaps, fragments")
    add_common(p)
    p.add_argument("--gamma", type=_float_list, help="tilt values for per-gamma tables")
    p.add_argument("--gamma-scan", type=_scan_spec, help="lo:hi:step scan in MHz")
    p.add_argument("--window", type=float, help="energy-density window width (default 0.05)")
    p.add_argument("--fragments", action="store_true", help="write dipole fragment labels")
    p.add_argument("--sizes", type=_int_list, help="system sizes for EEV scaling, e.g. 10,12,14")
    p.add_argument("--eev-scaling", type=_str_list, help="operators: dipole,imbalance")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("bloch", help="deep-tilt oscillations of a single product state")
    add_common(p)
    p.add_argument("--gamma", type=float, help="tilt in MHz (default 16)")
    p.add_argument("--t-max", type=float, help="final time in ns")
    p.add_argument("--dt", type=float, help="sampling step in ns")
    p.add_argument("--state", type=str, help="initial bitstring, site n-1 leftmost")
    p.add_argument(
        "--tone-selftest",
        action="store_true",
        help="check the spectrum pipeline on a synthetic tone and exit",
    )
    p.set_defaults(func=cmd_bloch)

    p = sub.add_parser("select-states", help="energy-window initial-state audit")
    add_common(p)
    p.add_argument("--gamma", type=float, help="tilt in MHz")
    p.add_argument("--k", type=int, help="number of states")
    p.add_argument("--epsilon-target", type=float)
    p.add_argument("--epsilon-tol", type=float)
    p.set_defaults(func=cmd_select_states)

    p = sub.add_parser("selftest", help="quick built-in cross-checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _scan_spec(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("scan must be lo:hi:step")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("scan needs step > 0 and hi >= lo")
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1)]


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{args.config}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{args.config}: top level must be an object")
    return data


def _resolve_device(cfg: dict, args) -> DeviceGraph:
    """Device from the config (inline or file reference), else the synthetic ladder."""
    if "device_file" in cfg:
        graph, _ = load_device_config(cfg["device_file"])
        return graph
    if "device" in cfg:
        graph, _ = parse_device_config(cfg["device"], source="config.device")
        return graph
    n_sites = args.n_sites or int(cfg.get("n_sites", 16))
    return triangular_ladder(n_sites, seed=int(cfg.get("ladder_seed", 7)))


def _out_dir(args, command: str, effective: dict) -> Path:
    if args.out_dir is not None:
        return Path(args.out_dir)
    root = Path(os.environ.get(OUT_DIR_ENV, "runs"))
    return root / f"{command}-{config_hash(effective)[:8]}"


def _observer_columns(names) -> list[str]:
    alias = {"hd": "hamming", "igen": "imbalance", "fq": "qfi"}
    return [alias.get(n.lower(), n.lower()) for n in names]


def cmd_quench(args) -> int:
    cfg = _load_config(args)
    graph = _resolve_device(cfg, args)
    grid = TimeGrid.uniform(
        args.t_max or float(cfg.get("t_max_ns", 1000.0)),
        args.dt or float(cfg.get("dt_ns", 5.0)),
    )
    observables = _observer_columns(
        args.observables or cfg.get("observables", ["hamming", "imbalance", "qfi"])
    )
    spec = EnsembleSpec(
        graph=graph,
        gammas_mhz=tuple(args.gamma or cfg.get("gammas_mhz", [1.0, 5.0, 8.0])),
        k_states=args.k or int(cfg.get("k_states", 20)),
        epsilon_target=float(cfg.get("epsilon_target", 0.5)),
        epsilon_tol=float(cfg.get("epsilon_tol", 0.02)),
        grid=grid,
        observables=tuple(observables),
        seed=args.seed if args.seed is not None else int(cfg.get("seed", 1234)),
        method=args.method or cfg.get("method", "auto"),
        correlation_times_ns=tuple(cfg.get("correlation_times_ns", ())),
        n_excitations=cfg.get("n_excitations"),
        initial_states=tuple(cfg["initial_states"]) if cfg.get("initial_states") else None,
        threads=args.threads or int(cfg.get("threads", 1)),
    )
    out = _out_dir(args, "quench", spec.to_dict())
    result = run_ensemble(spec)
    write_ensemble_result(result, out)
    if not args.no_plots:
        _plot_quench(result, out)
    print(
        f"quench: {len(spec.gammas_mhz)} tilt values x {len(result.per_gamma[0].series)} states "
        f"on {graph.n_sites} sites -> {out}"
    )
    return EXIT_OK


def _stark_hamiltonian(graph, gamma, basis):
    return build_hamiltonian(graph, PotentialProfile.stark(graph.n_sites, gamma), basis)


def _neel_state(n_sites: int, n_exc: int) -> int:
    """Alternating pattern 0101.. with exactly n_exc excited sites."""
    state = 0
    placed = 0
    for i in range(0, n_sites, 2):
        if placed == n_exc:
            break
        state |= 1 << i
        placed += 1
    for i in range(1, n_sites, 2):
        if placed == n_exc:
            break
        state |= 1 << i
        placed += 1
    return state


def cmd_spectrum(args) -> int:
    cfg = _load_config(args)
    if args.n_sites is None and "n_sites" not in cfg and "device" not in cfg and "device_file" not in cfg:
        cfg = dict(cfg, n_sites=12)  # ED with eigenvectors: keep the default small
    graph = _resolve_device(cfg, args)
    window = args.window or float(cfg.get("window", 0.05))
    gammas = args.gamma or cfg.get("gammas_mhz", [2.0])
    scan = args.gamma_scan or cfg.get("gamma_scan")
    effective = {
        "command": "spectrum",
        "n_sites": graph.n_sites,
        "edges": [[i, j, c] for i, j, c in graph.edges],
        "gammas_mhz": list(gammas),
        "gamma_scan": list(scan) if scan else None,
        "window": window,
        "fragments": bool(args.fragments),
        "sizes": list(args.sizes) if args.sizes else None,
        "eev_scaling": list(args.eev_scaling) if args.eev_scaling else None,
    }
    out = _out_dir(args, "spectrum", effective)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", effective)
    basis = build_sector_basis(graph.n_sites, graph.n_sites // 2)
    neel = _neel_state(graph.n_sites, basis.n_excitations)
    written = []

    if scan:
        ratio_rows, overlap_rows, overall_rows = [], [], []
        for gamma in scan:
            h = _stark_hamiltonian(graph, gamma, basis)
            eig = full_diagonalize(h)
            stats = gap_ratio_statistics(eig.eigenvalues, window_width=window)
            centers = 0.5 * (stats.window_edges[:-1] + stats.window_edges[1:])
            for c, m in zip(centers, stats.window_means):
                if np.isfinite(m):
                    ratio_rows.append((float(gamma), float(c), float(m)))
            overall_rows.append((float(gamma), stats.mean, float(stats.degenerate_gaps)))
            dist = overlap_distribution(QuantumState.from_bitstring(basis, neel), eig)
            edges = np.arange(0.0, 1.0 + window / 2, window)
            sums = dist.window_sums(edges)
            for c, s in zip(0.5 * (edges[:-1] + edges[1:]), sums):
                overlap_rows.append((float(gamma), float(c), float(s)))
        write_long_csv(out / "gap_ratio_map.csv", ["gamma_mhz", "epsilon", "mean_ratio"], ratio_rows)
        write_long_csv(
            out / "gap_ratio_overall.csv",
            ["gamma_mhz", "mean_ratio", "degenerate_gaps"],
            overall_rows,
        )
        write_long_csv(
            out / "overlap_map.csv", ["gamma_mhz", "epsilon", "overlap_sum"], overlap_rows
        )
        written += ["gap_ratio_map.csv", "gap_ratio_overall.csv", "overlap_map.csv"]

    dipole = build_dipole_operator(basis)
    imbalance = build_imbalance_operator(neel, basis)
    for gamma in gammas:
        tag = gamma_tag(gamma)
        h = _stark_hamiltonian(graph, gamma, basis)
        eig = full_diagonalize(h)
        td = eev_table(eig, dipole, "dipole")
        ti = eev_table(eig, imbalance, "imbalance")
        write_table_csv(
            out / f"eev_{tag}.csv",
            ["epsilon", "dipole", "imbalance"],
            [td.epsilons, td.values, ti.values],
        )
        written.append(f"eev_{tag}.csv")
        if args.fragments:
            labeling = classify_fragments(eig, dipole)
            write_table_csv(
                out / f"fragments_{tag}.csv",
                ["epsilon", "dipole", "label", "resolved"],
                [
                    td.epsilons,
                    labeling.dipole_values,
                    labeling.labels.astype(float),
                    labeling.resolved.astype(float),
                ],
            )
            summary = {
                "gamma_mhz": gamma,
                "unresolved_fraction": labeling.unresolved_fraction,
                "fragment_sizes": {
                    str(k): int(v.size) for k, v in sorted(labeling.fragments().items())
                },
            }
            (out / f"fragments_{tag}.json").write_text(
                json.dumps(summary, sort_keys=True, indent=1) + "\n"
            )
            written += [f"fragments_{tag}.csv", f"fragments_{tag}.json"]

    if args.sizes and args.eev_scaling:
        rows = []
        for op_name in args.eev_scaling:
            if op_name not in ("dipole", "imbalance"):
                raise ConfigError(f"unknown scaling operator {op_name!r}")
            for gamma in gammas:
                tables = []
                for n in args.sizes:
                    b = build_sector_basis(n, n // 2)
                    sub = triangular_ladder(n, seed=int(cfg.get("ladder_seed", 7)))
                    eig_n = full_diagonalize(_stark_hamiltonian(sub, gamma, b))
                    if op_name == "dipole":
                        op = build_dipole_operator(b, normalized=True)
                    else:
                        op = build_imbalance_operator(_neel_state(n, b.n_excitations), b)
                    tables.append((b.dimension, eev_table(eig_n, op, op_name)))
                fit = eev_fluctuations(tables)
                rows.append((op_name, float(gamma), fit.exponent, fit.exponent_err))
        write_long_csv(
            out / "eev_scaling.csv", ["operator", "gamma_mhz", "exponent", "stderr"], rows
        )
        written.append("eev_scaling.csv")

    print(f"spectrum: wrote {', '.join(written)} -> {out}")
    return EXIT_OK


def cmd_bloch(args) -> int:
    cfg = _load_config(args)
    if args.tone_selftest:
        t = np.arange(0.0, 1000.0, 5.0)
        f_mhz = 16.0
        spec = sigma_z_series_fourier(t, np.cos(2 * np.pi * f_mhz * t * 1e-3))
        peak = spec.peak_frequency(fmin_mhz=0.5)
        if abs(peak - f_mhz) > spec.resolution_mhz:
            raise RuntimeError(f"tone self-test failed: peak at {peak} MHz, expected {f_mhz}")
        print(f"bloch tone self-test: peak at {peak:g} MHz (resolution {spec.resolution_mhz:g})")
        return EXIT_OK

    graph = _resolve_device(cfg, args)
    gamma = args.gamma if args.gamma is not None else float(cfg.get("gamma_mhz", 16.0))
    grid = TimeGrid.uniform(
        args.t_max or float(cfg.get("t_max_ns", 1000.0)),
        args.dt or float(cfg.get("dt_ns", 5.0)),
    )
    basis = build_sector_basis(graph.n_sites, graph.n_sites // 2)
    if args.state or cfg.get("state"):
        text = args.state or cfg["state"]
        try:
            state = int(text, 2)
        except ValueError:
            raise ConfigError(f"state must be a bitstring, got {text!r}") from None
    else:
        state = _neel_state(graph.n_sites, basis.n_excitations)
    effective = {
        "command": "bloch",
        "n_sites": graph.n_sites,
        "edges": [[i, j, c] for i, j, c in graph.edges],
        "gamma_mhz": gamma,
        "times_ns": [float(t) for t in grid.times_ns],
        "state": format(state, f"0{graph.n_sites}b"),
        "method": args.method or "auto",
    }
    out = _out_dir(args, "bloch", effective)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", effective)

    h = _stark_hamiltonian(graph, gamma, basis)
    psi0 = QuantumState.from_bitstring(basis, state)
    series = run_quench(
        h,
        psi0,
        grid,
        make_observers(["sigma_z"], state, basis, h),
        method=args.method or cfg.get("method", "auto"),
    )
    write_series_csv(out / f"sigma_z_{gamma_tag(gamma)}.csv", series)
    signals = np.column_stack([series.columns[f"sz_{i}"] for i in range(graph.n_sites)])
    spectrum = sigma_z_series_fourier(series.times_ns, signals)
    write_spectrum_csv(out / f"spectrum_{gamma_tag(gamma)}.csv", spectrum)
    if not args.no_plots:
        _plot_bloch(series, spectrum, graph.n_sites, gamma, out)
    peak = spectrum.peak_frequency(fmin_mhz=0.5 * spectrum.resolution_mhz + 1e-9)
    print(
        f"bloch: gamma {gamma:g} MHz, dominant peak {peak:g} MHz "
        f"(resolution {spectrum.resolution_mhz:g} MHz) -> {out}"
    )
    return EXIT_OK


def cmd_select_states(args) -> int:
    cfg = _load_config(args)
    graph = _resolve_device(cfg, args)
    gamma = args.gamma if args.gamma is not None else float(cfg.get("gamma_mhz", 5.0))
    k = args.k or int(cfg.get("k_states", 20))
    target = args.epsilon_target or float(cfg.get("epsilon_target", 0.5))
    tol = args.epsilon_tol or float(cfg.get("epsilon_tol", 0.02))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 1234))
    effective = {
        "command": "select-states",
        "n_sites": graph.n_sites,
        "edges": [[i, j, c] for i, j, c in graph.edges],
        "gamma_mhz": gamma,
        "k_states": k,
        "epsilon_target": target,
        "epsilon_tol": tol,
        "seed": seed,
    }
    out = _out_dir(args, "select", effective)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", effective)

    basis = build_sector_basis(graph.n_sites, graph.n_sites // 2)
    potential = PotentialProfile.stark(graph.n_sites, gamma)
    rng = np.random.Generator(np.random.Philox(seed))
    selection = select_initial_states(basis, graph, potential, target, tol, k, rng)
    distances, counts = pairwise_hamming_histogram(selection.states)
    audit = {
        "gamma_mhz": gamma,
        "states": list(selection.states),
        "bitstrings": [format(s, f"0{graph.n_sites}b") for s in selection.states],
        "epsilons": list(selection.epsilons),
        "e_ground": selection.e_ground,
        "e_max": selection.e_max,
        "n_qualifying": selection.n_qualifying,
        "mode": selection.mode,
    }
    (out / "selection.json").write_text(json.dumps(audit, sort_keys=True, indent=1) + "\n")
    write_long_csv(
        out / "pairwise_hamming.csv",
        ["distance", "count"],
        [(int(d), int(c)) for d, c in zip(distances, counts)],
    )
    print(
        f"select-states: {k} states within epsilon {target} +- {tol} at gamma {gamma:g} MHz -> {out}"
    )
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Fast consistency checks exercising every subsystem end to end."""
    checks: list[tuple[str, bool, str]] = []

    basis = build_sector_basis(10, 5)
    ok = all(basis.rank(basis.unrank(m)) == m for m in range(basis.dimension))
    checks.append(("sector rank/unrank roundtrip", ok, f"dimension {basis.dimension}"))

    j = 3.0
    b2 = build_sector_basis(2, 1)
    h2 = build_hamiltonian(
        DeviceGraph(2, ((0, 1, j),)), PotentialProfile.explicit([0.0, 0.0]), b2
    )
    eig2 = full_diagonalize(h2)
    from .evolve import evolve_exact

    t_ns = np.linspace(0.0, 1000.0, 501)
    pop = np.array(
        [abs(evolve_exact(eig2, QuantumState.from_bitstring(b2, 0b01), t).amplitudes[0]) ** 2 for t in t_ns]
    )
    spec2 = sigma_z_series_fourier(t_ns, pop)
    peak = spec2.peak_frequency(fmin_mhz=0.5)
    ok = abs(peak - 2 * j) <= spec2.resolution_mhz
    checks.append(("two-level swap at 2J", ok, f"peak {peak:g} MHz vs {2 * j:g}"))

    b8 = build_sector_basis(8, 4)
    g8 = triangular_ladder(8)
    h8 = build_hamiltonian(g8, PotentialProfile.stark(8, 4.0), b8)
    psi = QuantumState.from_bitstring(b8, int(b8.states[17]))
    grid = TimeGrid.uniform(100.0, 20.0)
    obs = lambda: make_observers(["imbalance"], int(b8.states[17]), b8, h8)
    exact = run_quench(h8, psi, grid, obs(), method="exact")
    kry = run_quench(
        h8, psi, grid, obs(), method="krylov", krylov=KrylovConfig(tolerance=1e-12)
    )
    diff = float(np.max(np.abs(exact.column("imbalance") - kry.column("imbalance"))))
    checks.append(("exact vs Krylov propagation", diff < 1e-8, f"max abs diff {diff:.2e}"))

    r = np.linspace(0.0, 1.0, 20001)
    p_goe, p_poisson = reference_distributions(r)
    int_goe = float(np.trapezoid(p_goe, r))
    int_poi = float(np.trapezoid(p_poisson, r))
    ok = abs(int_goe - 1.0) < 1e-6 and abs(int_poi - 1.0) < 1e-6
    checks.append(("reference gap-ratio densities", ok, f"integrals {int_goe:.8f}, {int_poi:.8f}"))

    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if failed:
        print(f"selftest: {len(failed)} of {len(checks)} checks failed", file=sys.stderr)
        return 1
    print(f"selftest: all {len(checks)} checks passed")
    return EXIT_OK


def _plot_quench(result, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    times = result.spec.grid.times_ns
    for name in result.per_gamma[0].aggregated:
        fig, ax = plt.subplots(figsize=(6, 4))
        for g in result.per_gamma:
            mean, stderr = g.aggregated[name]
            ax.plot(times, mean, label=f"gamma = {g.gamma_mhz:g} MHz")
            if np.all(np.isfinite(stderr)):
                ax.fill_between(times, mean - stderr, mean + stderr, alpha=0.25)
        ax.set_xlabel("t (ns)")
        ax.set_ylabel(name)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"{name}.svg")
        plt.close(fig)


def _plot_bloch(series, spectrum, n_sites: int, gamma: float, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 7))
    shown = [n_sites // 3, 2 * n_sites // 3]
    for q in shown:
        ax1.plot(series.times_ns, series.columns[f"sz_{q}"], label=f"site {q}")
    ax1.set_xlabel("t (ns)")
    ax1.set_ylabel("sigma_z")
    ax1.legend()
    ax2.plot(spectrum.frequencies_mhz, spectrum.mean_amplitude)
    ax2.axvline(gamma, color="k", ls="--", lw=0.8)
    ax2.set_xlabel("frequency (MHz)")
    ax2.set_ylabel("mean Fourier amplitude")
    fig.tight_layout()
    fig.savefig(out / f"bloch_{gamma_tag(gamma)}.svg")
    plt.close(fig)


if __name__ == "__main__":
    sys.exit(main())
