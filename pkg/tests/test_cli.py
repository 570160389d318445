import csv
import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from cgbp.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main
from cgbp.config import ConfigError, config_hash, parse_config

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"
RUNS = {
    "chain-bp": ("chain_bp.toml", "chain_bp"),
    "spin-glass": ("spin_glass.toml", "spin_glass"),
    "cgbp": ("cgbp.toml", "cgbp"),
}


def read_table(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta = [l for l in lines if l.startswith("#")]
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    return meta, rows


def run(command, out, seed=7, config=None):
    cfg = config or FIXTURES / RUNS[command][0]
    return main([command, "--config", str(cfg), "--out", str(out), "--seed", str(seed)])


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="tolerance"):
            parse_config("chain-bp", "[bp]\ntolerance = 1e-9\n[grid]\ntemperatures=[1.0]")

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            parse_config("chain-bp", "[mera]\nchi = 2")

    def test_type_errors(self):
        with pytest.raises(ConfigError):
            parse_config("chain-bp", "[bp]\nl = 4.5\n[grid]\ntemperatures=[1.0]")
        with pytest.raises(ConfigError):
            parse_config("chain-bp", "B = true\n[grid]\ntemperatures=[1.0]")

    def test_grid_required(self):
        with pytest.raises(ConfigError):
            parse_config("chain-bp", "B = 1.0")

    def test_invalid_toml(self):
        with pytest.raises(ConfigError):
            parse_config("chain-bp", "B = = 1")

    def test_section_defaults_kept(self):
        cfg = parse_config("cgbp", "[bp]\nl = 3\n[grid]\nt_min = 0.1\nt_max = 2.0")
        assert cfg.bp.l == 3 and cfg.bp.fail_on_nonconvergence is False

    def test_hash_ignores_formatting(self):
        a = parse_config("chain-bp", "B = 1\n[grid]\ntemperatures = [1.0, 2.0]")
        b = parse_config("chain-bp", "B=1.0\n\n[grid]\ntemperatures=[1,2]")
        assert config_hash(a) == config_hash(b)


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("B = 1.0\nbogus = 2\n")
        assert run("chain-bp", tmp_path, config=bad) == EXIT_CONFIG
        assert "bogus" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert run("chain-bp", tmp_path, config=tmp_path / "none.toml") == EXIT_IO

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert run("chain-bp", blocker / "sub") == EXIT_IO

    def test_nonconvergence(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[bp]\nl = 4\nmax_iter = 3\n[grid]\ntemperatures = [0.3]\n")
        assert run("chain-bp", tmp_path, config=cfg) == EXIT_NUMERICAL
        # results are still written for inspection
        assert (tmp_path / "chain_bp.csv").exists()

    def test_bad_seed(self, tmp_path):
        assert run("chain-bp", tmp_path, seed=-1) == EXIT_CONFIG


class TestOutputs:
    def test_chain_bp_rows(self, tmp_path):
        assert run("chain-bp", tmp_path) == EXIT_OK
        meta, rows = read_table(tmp_path / "chain_bp.csv")
        assert len(rows) == 5
        assert {"T", "energy", "bp_error_estimate", "jw_exact", "true_error"} <= set(rows[0])
        assert any(m.startswith("# config_sha256:") for m in meta)
        assert "# seed: 7" in meta

    def test_spin_glass_audit(self, tmp_path):
        cfg = tmp_path / "g.toml"
        cfg.write_text("B = [1.0]\nT = [1.0]\ndepth = 2\ninstances = 2\n")
        assert run("spin-glass", tmp_path, config=cfg) == EXIT_OK
        _, rows = read_table(tmp_path / "spin_glass.csv")
        assert len(rows) == 1
        lines = (tmp_path / "instances.jsonl").read_text().splitlines()
        assert len(lines) == 2 and json.loads(lines[0])["instance"] == 0

    def test_cgbp_levels0_matches_chain_bp(self, tmp_path):
        assert run("chain-bp", tmp_path / "a", config=FIXTURES / "chain_bp_grid11.toml") == EXIT_OK
        assert run("cgbp", tmp_path / "b", config=FIXTURES / "cgbp_levels0.toml") == EXIT_OK
        _, a = read_table(tmp_path / "a" / "chain_bp.csv")
        _, b = read_table(tmp_path / "b" / "stitched.csv")
        assert [r["energy"] for r in a] == [r["energy"] for r in b]
        assert [r["bp_error_estimate"] for r in a] == [r["total_error"] for r in b]

    def test_cgbp_bundle(self, tmp_path):
        assert run("cgbp", tmp_path) == EXIT_OK
        names = {p.name for p in tmp_path.iterdir()}
        assert {"level_0.csv", "level_1.csv", "stitched.csv", "switches.json", "mera_layers.json"} <= names
        sw = json.loads((tmp_path / "switches.json").read_text())
        assert [s["label"] for s in sw["switches"]] == ["T_1"]
        _, rows = read_table(tmp_path / "stitched.csv")
        assert "total_error" in rows[0]


@pytest.mark.parametrize("command", sorted(RUNS))
def test_rerun_byte_identical(command, tmp_path):
    assert run(command, tmp_path / "a") == EXIT_OK
    assert run(command, tmp_path / "b") == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    assert mismatch == [] and errors == []


@pytest.mark.parametrize("command", sorted(RUNS))
def test_golden_regression(command, tmp_path):
    # numbers may differ in the last bits across BLAS builds, so compare to 1e-9
    assert run(command, tmp_path) == EXIT_OK
    golden = GOLDEN / RUNS[command][1]
    for ref in sorted(golden.glob("*.csv")):
        meta_ref, rows_ref = read_table(ref)
        meta, rows = read_table(tmp_path / ref.name)
        assert meta == meta_ref
        assert len(rows) == len(rows_ref)
        for a, b in zip(rows, rows_ref):
            assert a.keys() == b.keys()
            np.testing.assert_allclose(
                [float(a[k]) for k in a], [float(b[k]) for k in b], rtol=1e-9, atol=1e-12, equal_nan=True
            )
