import json

import numpy as np
import pytest

from starkmbl.evolve import TimeGrid
from starkmbl.io import (
    ConfigError,
    config_hash,
    device_config_dict,
    fmt_float,
    gamma_tag,
    load_device_config,
    parse_device_config,
    write_ensemble_result,
    write_series_csv,
)
from starkmbl.model import PotentialProfile, triangular_ladder
from starkmbl.protocol import EnsembleSpec, run_ensemble


def small_spec(**kw):
    defaults = dict(
        graph=triangular_ladder(8),
        gammas_mhz=(2.0,),
        k_states=3,
        epsilon_tol=0.1,
        grid=TimeGrid.uniform(60.0, 20.0),
        seed=5,
        method="exact",
    )
    defaults.update(kw)
    return EnsembleSpec(**defaults)


class TestDeviceConfig:
    def test_roundtrip(self, tmp_path):
        graph = triangular_ladder(6)
        pot = PotentialProfile.stark(6, 4.0)
        path = tmp_path / "device.json"
        path.write_text(json.dumps(device_config_dict(graph, pot)))
        graph2, pot2 = load_device_config(path)
        assert graph2 == graph
        assert pot2.w_mhz == pot.w_mhz

    def test_random_and_explicit_potentials(self):
        data = {
            "n_sites": 4,
            "edges": [[0, 1, 2.0]],
            "potential": {"type": "random", "v_mhz": 3.0, "seed": 9},
        }
        _, pot = parse_device_config(data)
        assert pot.kind == "random" and pot.params["seed"] == 9
        data["potential"] = {"type": "explicit", "w_mhz": [0.0, 1.0, 2.0, 3.0]}
        _, pot = parse_device_config(data)
        assert pot.w_mhz == (0.0, 1.0, 2.0, 3.0)

    def test_json_error_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"n_sites": 4,\n  "edges": [[0, 1, }')
        with pytest.raises(ConfigError, match="line 2"):
            load_device_config(path)

    def test_field_errors_name_the_field(self):
        with pytest.raises(ConfigError, match="n_sites"):
            parse_device_config({"edges": [], "potential": {"type": "stark", "gamma_mhz": 1}})
        with pytest.raises(ConfigError, match=r"edges\[0\]"):
            parse_device_config(
                {"n_sites": 4, "edges": [[0, 1]], "potential": {"type": "stark", "gamma_mhz": 1}}
            )
        with pytest.raises(ConfigError, match="gamma_mhz"):
            parse_device_config({"n_sites": 4, "edges": [], "potential": {"type": "stark"}})
        with pytest.raises(ConfigError, match="unknown potential"):
            parse_device_config({"n_sites": 4, "edges": [], "potential": {"type": "linear"}})
        with pytest.raises(ConfigError, match="w_mhz must list exactly 4"):
            parse_device_config(
                {"n_sites": 4, "edges": [], "potential": {"type": "explicit", "w_mhz": [1.0]}}
            )

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_device_config(tmp_path / "nope.json")


class TestHashingAndTags:
    def test_config_hash_stable_under_key_order(self):
        assert config_hash({"a": 1, "b": [2.5]}) == config_hash({"b": [2.5], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_gamma_tags(self):
        assert gamma_tag(8.0) == "g8"
        assert gamma_tag(0.5) == "g0p5"
        assert gamma_tag(-2.0) == "gm2"

    def test_float_formatting_roundtrips(self):
        for x in (1 / 3, 1e-17, 123456.789, 0.1 + 0.2):
            assert float(fmt_float(x)) == x


class TestEnsembleOutput:
    def test_directory_tree_and_manifest(self, tmp_path):
        result = run_ensemble(small_spec())
        manifest = write_ensemble_result(result, tmp_path)
        assert (tmp_path / "manifest.json").exists()
        assert manifest["config_hash"] == config_hash(result.spec.to_dict())
        assert (tmp_path / "audit" / "g2.json").exists()
        raw = sorted((tmp_path / "raw" / "g2").glob("state_*.csv"))
        assert len(raw) == 3
        agg = list((tmp_path / "agg").glob("g2_N8_k3_seed5_exact.csv"))
        assert len(agg) == 1

    def test_aggregate_recomputed_from_raw_matches_exactly(self, tmp_path):
        result = run_ensemble(small_spec())
        write_ensemble_result(result, tmp_path)
        raw_files = sorted((tmp_path / "raw" / "g2").glob("state_*.csv"))
        tables = [np.genfromtxt(f, delimiter=",", names=True) for f in raw_files]
        agg_file = next((tmp_path / "agg").glob("*.csv"))
        agg = np.genfromtxt(agg_file, delimiter=",", names=True)
        for name in ("hamming", "imbalance", "qfi"):
            stack = np.stack([t[name] for t in tables])
            np.testing.assert_array_equal(stack.mean(axis=0), agg[f"mean_{name}"])
            np.testing.assert_array_equal(
                stack.std(axis=0, ddof=1) / np.sqrt(len(tables)), agg[f"stderr_{name}"]
            )

    def test_reruns_are_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        write_ensemble_result(run_ensemble(small_spec()), out_a)
        write_ensemble_result(run_ensemble(small_spec()), out_b)
        files_a = sorted(p for p in out_a.rglob("*.csv"))
        files_b = sorted(p for p in out_b.rglob("*.csv"))
        assert [p.name for p in files_a] == [p.name for p in files_b]
        for pa, pb in zip(files_a, files_b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_series_csv_round_trips_full_precision(self, tmp_path):
        result = run_ensemble(small_spec())
        series = result.per_gamma[0].series[0]
        path = tmp_path / "series.csv"
        write_series_csv(path, series)
        parsed = np.genfromtxt(path, delimiter=",", names=True)
        np.testing.assert_array_equal(parsed["time_ns"], series.times_ns)
        np.testing.assert_array_equal(parsed["qfi"], series.columns["qfi"])
