"""File formats: device configs, observable CSV/JSON, manifests.

CSV floats are written with repr precision (%.17g) so persisted series
round-trip exactly and repeated runs produce byte-identical files.  The
schemas are documented in docs/formats.md.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .model import DeviceGraph, PotentialProfile

__all__ = [
    "ConfigError",
    "load_device_config",
    "parse_device_config",
    "device_config_dict",
    "potential_from_dict",
    "canonical_json",
    "config_hash",
    "fmt_float",
    "write_series_csv",
    "write_series_json",
    "write_correlation_csv",
    "write_correlation_edges",
    "write_spectrum_csv",
    "write_long_csv",
    "write_table_csv",
]


class ConfigError(Exception):
    """Malformed or inconsistent configuration input."""


def fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def canonical_json(obj) -> str:
    """Deterministic JSON used for hashing and manifests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def load_device_config(path) -> tuple[DeviceGraph, PotentialProfile]:
    """Read a device JSON file: n_sites, weighted edges, and the potential."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read device config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_device_config(data, source=str(path))


def parse_device_config(data: dict, source: str = "<config>") -> tuple[DeviceGraph, PotentialProfile]:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    try:
        n_sites = int(data["n_sites"])
    except KeyError:
        raise ConfigError(f"{source}: missing field 'n_sites'") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: field 'n_sites' must be an integer") from None

    edges_raw = data.get("edges")
    if not isinstance(edges_raw, list):
        raise ConfigError(f"{source}: field 'edges' must be a list of [i, j, J_MHz]")
    edges = []
    for pos, item in enumerate(edges_raw):
        if not (isinstance(item, (list, tuple)) and len(item) == 3):
            raise ConfigError(f"{source}: edges[{pos}] must be [i, j, J_MHz]")
        try:
            edges.append((int(item[0]), int(item[1]), float(item[2])))
        except (TypeError, ValueError):
            raise ConfigError(f"{source}: edges[{pos}] has non-numeric entries") from None
    try:
        graph = DeviceGraph(n_sites, tuple(edges))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    potential = potential_from_dict(data.get("potential"), n_sites, source=source)
    return graph, potential


def potential_from_dict(obj, n_sites: int, source: str = "<config>") -> PotentialProfile:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ConfigError(f"{source}: field 'potential' must be an object with a 'type'")
    kind = obj["type"]
    try:
        if kind == "stark":
            return PotentialProfile.stark(n_sites, float(obj["gamma_mhz"]))
        if kind == "random":
            return PotentialProfile.random(n_sites, float(obj["v_mhz"]), int(obj["seed"]))
        if kind == "explicit":
            w = obj["w_mhz"]
            if not isinstance(w, list) or len(w) != n_sites:
                raise ConfigError(
                    f"{source}: potential.w_mhz must list exactly {n_sites} values"
                )
            return PotentialProfile.explicit([float(v) for v in w])
    except KeyError as exc:
        raise ConfigError(f"{source}: potential.{exc.args[0]} is required for type {kind!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: bad potential field: {exc}") from None
    raise ConfigError(f"{source}: unknown potential type {kind!r}")


def device_config_dict(graph: DeviceGraph, potential: PotentialProfile) -> dict:
    """Round-trippable dict form of a device (inverse of parse_device_config)."""
    pot: dict = {"type": potential.kind}
    if potential.kind == "stark":
        pot["gamma_mhz"] = potential.params["gamma_mhz"]
    elif potential.kind == "random":
        pot.update(potential.params)
    else:
        pot["type"] = "explicit"
        pot["w_mhz"] = list(potential.w_mhz)
    return {
        "n_sites": graph.n_sites,
        "edges": [[i, j, c] for i, j, c in graph.edges],
        "potential": pot,
    }


def write_series_csv(path, series) -> None:
    """One row per time: time_ns followed by every observable column."""
    path = Path(path)
    names = list(series.columns)
    with path.open("w", newline="") as fh:
        fh.write(",".join(["time_ns"] + names) + "\n")
        for row, t in enumerate(series.times_ns):
            cells = [fmt_float(t)] + [fmt_float(series.columns[c][row]) for c in names]
            fh.write(",".join(cells) + "\n")


def write_series_json(path, series) -> None:
    payload = {
        "metadata": series.metadata,
        "times_ns": [float(t) for t in series.times_ns],
        "columns": {c: [float(v) for v in vals] for c, vals in series.columns.items()},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def write_correlation_csv(path, matrix: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        for row in np.asarray(matrix):
            fh.write(",".join(fmt_float(v) for v in row) + "\n")


def write_correlation_edges(path, matrix: np.ndarray) -> None:
    """Edge-list form (i, j, C) of the upper triangle, for plotting."""
    matrix = np.asarray(matrix)
    with Path(path).open("w", newline="") as fh:
        fh.write("i,j,correlation\n")
        n = matrix.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                fh.write(f"{i},{j},{fmt_float(matrix[i, j])}\n")


def write_spectrum_csv(path, spectrum) -> None:
    """Frequency grid with the qubit-averaged and per-qubit amplitudes."""
    per_qubit = np.asarray(spectrum.per_qubit)
    with Path(path).open("w", newline="") as fh:
        header = ["frequency_mhz", "amplitude"] + [f"amplitude_q{i}" for i in range(per_qubit.shape[0])]
        fh.write(",".join(header) + "\n")
        for k, f in enumerate(spectrum.frequencies_mhz):
            cells = [fmt_float(f), fmt_float(spectrum.mean_amplitude[k])]
            cells += [fmt_float(per_qubit[q, k]) for q in range(per_qubit.shape[0])]
            fh.write(",".join(cells) + "\n")


def write_long_csv(path, header: list[str], rows) -> None:
    """Long-format table (e.g. gamma, epsilon, value triples for heatmaps)."""
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_float(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def write_table_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    """Column-oriented CSV with repr-precision floats."""
    columns = [np.asarray(c) for c in columns]
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(columns[0].size):
            fh.write(",".join(fmt_float(c[row]) for c in columns) + "\n")


def gamma_tag(gamma_mhz: float) -> str:
    """Filesystem-safe tag for a tilt value: 0.5 -> g0p5, -2 -> gm2."""
    return "g" + f"{gamma_mhz:g}".replace(".", "p").replace("-", "m")


def write_manifest(path, config: dict, extra: dict | None = None) -> dict:
    """Run manifest: config hash, tool version, seeds, and wall-clock metadata.

    Written before any result file so every output can reference it.
    """
    import datetime

    from . import __version__

    manifest = {
        "config": config,
        "config_hash": config_hash(config),
        "tool_version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def write_ensemble_result(result, out_dir) -> dict:
    """Persist an ensemble run as manifest + audit/ + raw/ + agg/.

    Data CSVs are byte-reproducible for identical spec and seed; only the
    manifest carries wall-clock metadata.  Returns the manifest dict.
    """
    out = Path(out_dir)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    (out / "agg").mkdir(exist_ok=True)
    (out / "audit").mkdir(exist_ok=True)
    spec = result.spec
    manifest = write_manifest(
        out / "manifest.json",
        spec.to_dict(),
        {"methods": {gamma_tag(g.gamma_mhz): g.method for g in result.per_gamma}},
    )

    n = spec.graph.n_sites
    for g in result.per_gamma:
        tag = gamma_tag(g.gamma_mhz)
        distances, counts = g.hamming_histogram
        audit = {
            "gamma_mhz": g.gamma_mhz,
            "selection_mode": g.selection.mode,
            "states": list(g.selection.states),
            "bitstrings": [format(s, f"0{n}b") for s in g.selection.states],
            "epsilons": list(g.selection.epsilons),
            "e_ground": g.selection.e_ground,
            "e_max": g.selection.e_max,
            "n_qualifying": g.selection.n_qualifying,
            "pairwise_hamming": {
                "distance": [int(d) for d in distances],
                "count": [int(c) for c in counts],
            },
        }
        (out / "audit" / f"{tag}.json").write_text(
            json.dumps(audit, sort_keys=True, indent=1) + "\n"
        )

        raw_dir = out / "raw" / tag
        raw_dir.mkdir(exist_ok=True)
        for i, series in enumerate(g.series):
            write_series_csv(
                raw_dir / f"state_{i:02d}_N{n}_{tag}_seed{spec.seed}_{g.method}.csv", series
            )
            for t, matrix in series.correlation_snapshots.items():
                write_correlation_csv(
                    raw_dir / f"state_{i:02d}_corr_t{int(round(t))}ns.csv", matrix
                )

        header = ["time_ns"]
        columns = [np.asarray(result.spec.grid.times_ns)]
        for name, (mean, stderr) in g.aggregated.items():
            header += [f"mean_{name}", f"stderr_{name}"]
            columns += [mean, stderr]
        write_table_csv(
            out / "agg" / f"{tag}_N{n}_k{len(g.series)}_seed{spec.seed}_{g.method}.csv",
            header,
            columns,
        )
    return manifest
