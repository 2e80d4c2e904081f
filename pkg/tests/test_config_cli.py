import json
from pathlib import Path

import pytest
import yaml

from polnet.cli import main
from polnet.config import (
    ConfigError,
    ExperimentConfig,
    classical_attenuation,
    config_to_dict,
    load_config,
    save_config,
    validate_config,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TestLoad:
    def test_minimal_fringe(self):
        cfg = validate_config({"kind": "fringe"})
        assert cfg.coincidence_window == 1000.0 and cfg.timing_bin == 10.0
        assert cfg.source.bell_kind.value == "psi_minus"

    def test_negative_length_names_field(self):
        with pytest.raises(ConfigError) as err:
            validate_config({"kind": "cd_timing", "fiber_b": {"sections": [{"length": -5.0}]}})
        assert any("fiber_b.sections.0.length" in e for e in err.value.errors)

    def test_all_errors_reported(self):
        with pytest.raises(ConfigError) as err:
            validate_config({"kind": "fringe", "sede": 3, "source": {"mean_pair_number": -1},
                             "analyzer_a": {"pbs": {"bitflip_prob": 2}}})
        joined = "\n".join(err.value.errors)
        assert len(err.value.errors) == 3
        assert "sede" in joined and "mean_pair_number" in joined and "bitflip_prob" in joined

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            validate_config({"kind": "bell_test"})

    @pytest.mark.parametrize("suffix", [".json", ".yaml"])
    def test_source_roundtrip(self, tmp_path, suffix):
        cfg = validate_config({"kind": "jsi", "source": {"mean_pair_number": 0.1, "statistics": "thermal",
                                                          "repetition_rate": 80e6}})
        path = tmp_path / f"cfg{suffix}"
        save_config(cfg, path)
        back = load_config(path)
        assert back == cfg
        assert config_to_dict(back)["source"] == config_to_dict(cfg)["source"]

    def test_non_mapping_rejected(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    @pytest.mark.parametrize("path", sorted(CONFIGS.iterdir()), ids=lambda p: p.name)
    def test_shipped_configs_validate(self, path):
        assert isinstance(load_config(path), ExperimentConfig)

    def test_classical_attenuation(self):
        s = validate_config({"kind": "raman_sweep"}).raman_sweep
        assert classical_attenuation(s, 1270.0) == pytest.approx(0.35 * 0.1 * 2.302585092994046 / 1000)
        with pytest.raises(ConfigError):
            classical_attenuation(s, 1600.0)


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


SMALL_FRINGE = {"kind": "fringe", "seed": 5, "pairs_per_setting": 2000,
                "fringe": {"theta_a": [0.0, 45.0], "theta_b": [0.0, 45.0, 90.0, 135.0]}}


class TestCli:
    def test_writes_tables_and_metadata(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main([str(write(tmp_path, SMALL_FRINGE)), "--out-dir", str(out)]) == 0
        assert (out / "fringe.csv").exists() and (out / "fringe_fit.csv").exists()
        header = (out / "fringe.csv").read_text().splitlines()[0]
        assert header == "theta_a_deg,theta_b_deg,n00,n01,n10,n11"
        meta = json.loads((out / "run_metadata.json").read_text())
        assert meta["kind"] == "fringe" and meta["seed"] == 5
        assert meta["files"] == ["fringe.csv", "fringe_fit.csv"]
        assert "fringe" in capsys.readouterr().out

    def test_quiet(self, tmp_path, capsys):
        main([str(write(tmp_path, SMALL_FRINGE)), "--out-dir", str(tmp_path / "o"), "--quiet"])
        assert capsys.readouterr().out == ""

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, SMALL_FRINGE)
        main([str(cfg), "--out-dir", str(tmp_path / "a"), "--seed", "11", "--quiet"])
        main([str(cfg), "--out-dir", str(tmp_path / "b"), "--quiet"])
        meta = json.loads((tmp_path / "a" / "run_metadata.json").read_text())
        assert meta["seed"] == 11 and meta["config"]["seed"] == 11
        assert (tmp_path / "a" / "fringe.csv").read_bytes() != (tmp_path / "b" / "fringe.csv").read_bytes()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write(tmp_path, SMALL_FRINGE)
        for name in ("a", "b"):
            main([str(cfg), "--out-dir", str(tmp_path / name), "--quiet"])
        for f in ("fringe.csv", "fringe_fit.csv", "run_metadata.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_metadata_reproduces_run(self, tmp_path):
        main([str(write(tmp_path, SMALL_FRINGE)), "--out-dir", str(tmp_path / "a"), "--quiet"])
        meta = json.loads((tmp_path / "a" / "run_metadata.json").read_text())
        cfg2 = tmp_path / "from_meta.yaml"
        cfg2.write_text(yaml.safe_dump(meta["config"]))
        main([str(cfg2), "--out-dir", str(tmp_path / "b"), "--quiet"])
        assert (tmp_path / "a" / "fringe.csv").read_bytes() == (tmp_path / "b" / "fringe.csv").read_bytes()

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        bad = write(tmp_path, {"kind": "fringe", "coincidence_window": -1})
        assert main([str(bad), "--out-dir", str(tmp_path / "o")]) != 0
        assert "coincidence_window" in capsys.readouterr().err

    def test_missing_file_exit_code(self, tmp_path):
        assert main([str(tmp_path / "nope.json")]) != 0

    def test_runtime_error_exit_code(self, tmp_path):
        # Y-basis tomography is impossible with a half-wave plate only
        cfg = write(tmp_path, {"kind": "tomography", "pairs_per_setting": 100,
                               "analyzer_a": {"mode": "hwp_only"}})
        assert main([str(cfg), "--out-dir", str(tmp_path / "o"), "--quiet"]) != 0

    def test_tomography_outputs(self, tmp_path):
        cfg = write(tmp_path, {"kind": "tomography", "pairs_per_setting": 5000})
        main([str(cfg), "--out-dir", str(tmp_path / "o"), "--quiet"])
        rows = (tmp_path / "o" / "density_matrix.csv").read_text().splitlines()
        assert rows[0] == "row,col,real,imag" and len(rows) == 17
        meta = json.loads((tmp_path / "o" / "run_metadata.json").read_text())
        assert 0.9 < meta["summary"]["fidelity"] <= 1.0
