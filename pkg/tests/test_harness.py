import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gaugeprot.cli import main
from gaugeprot.harness import ConfigError, resolve_sequence, run_experiment, validate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _base(**over):
    cfg = {
        "schema_version": 1,
        "experiment": "v_scan",
        "model": {"L": 2, "mu": 0.5, "lam": 0.05, "error_kind": "extreme"},
        "initial_state": "staggered_vacuum",
        "grids": {"V": [0.1, 1.0, 10.0]},
        "options": {
            "columns": [
                {"name": "quadratic", "protection": "quadratic"},
                {"name": "compliant", "protection": "linear", "sequence": {"numerators": [-1, 1], "denominator": 1}},
            ]
        },
    }
    cfg.update(over)
    return cfg


def test_presets_expand_to_paper_values():
    assert resolve_sequence({"preset": "paper_compliant_L6"}, 6).numerators == (-115, 116, -118, 122, -130, 146)
    assert resolve_sequence({"preset": "paper_noncompliant_L6"}, 6).denominator == 145
    assert resolve_sequence({"preset": "searched_compliant", "variant": "nonstaggered"}, 4).numerators == (1, 5, 4, 7)
    assert resolve_sequence({"preset": "searched_compliant", "variant": "swapped"}, 4).numerators == (-1, 4, -5, 7)


def test_vscan_three_points(tmp_path):
    paths = run_experiment(validate(_base()), tmp_path)
    rows = list(csv.reader(open(tmp_path / "vscan.csv")))
    assert rows[0] == ["J_over_V", "eps_inf_quadratic", "eps_inf_compliant"]
    assert len(rows) == 4
    assert [float(r[0]) for r in rows[1:]] == sorted(float(r[0]) for r in rows[1:])
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["config"]["experiment"] == "v_scan" and "vscan.csv" in manifest["outputs"]
    assert paths[-1].name == "run_manifest.json"


def test_output_independent_of_threads(tmp_path):
    run_experiment(validate(_base()), tmp_path / "a", threads=1)
    run_experiment(validate(_base()), tmp_path / "b", threads=3)
    assert (tmp_path / "a/vscan.csv").read_bytes() == (tmp_path / "b/vscan.csv").read_bytes()


def test_validation_lists_every_problem():
    bad = _base(model={"L": 2, "mu": "x", "colour": 1}, grids={"V": "many"})
    with pytest.raises(ConfigError) as exc:
        validate(bad)
    text = "\n".join(exc.value.problems)
    assert "model" in text and "grids.V" in text and len(exc.value.problems) >= 3


def test_semantic_validation():
    with pytest.raises(ConfigError, match="does not match"):
        validate(_base(experiment="trajectory", sequence={"preset": "paper_compliant_L6"},
                       model={"L": 4, "error_kind": "extreme", "protection_kind": "linear"}))
    with pytest.raises(ConfigError, match="not in g = 0"):
        validate(_base(initial_state={"bitstring": "0000"}))
    ok = validate(_base(initial_state={"bitstring": "0000"}, allow_gauge_violating_state=True))
    assert ok.psi0[0] == 1
    with pytest.raises(ConfigError, match="circuits support"):
        validate(_base(experiment="circuit", sequence={"preset": "staggered_unit"}, grids={"dt": [0.1]}))


def test_every_recipe_validates_at_both_scales():
    for path in sorted(CONFIGS.glob("*.json")):
        raw = json.loads(path.read_text())
        cfg = validate(raw, ci_scale=True)
        assert cfg.params.L == 4
        if "searched_compliant" not in path.read_text():  # full-scale search is slow
            validate(raw)


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(_base()))
    assert main(["vscan", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o/run_manifest.json").exists()
    assert main(["trajectory", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    cfg.write_text(json.dumps(_base(bogus=1)))
    assert main(["vscan", "--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert main(["vscan", "--config", str(cfg)]) == 2


def test_cli_ci_scale_recipe(tmp_path):
    rc = main(["norms", "--config", str(CONFIGS / "norms_local.json"), "--out", str(tmp_path), "--ci-scale"])
    assert rc == 0
    est = json.loads((tmp_path / "norm_estimate.json").read_text())
    assert 1500 < est["V0"] < 6000


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "gaugeprot", "zeno", "--out", str(tmp_path), "--ci-scale"],
        capture_output=True, text=True,
    )
    assert out.returncode == 0, out.stderr
    rows = list(csv.reader(open(tmp_path / "zeno.csv")))
    assert rows[0] == ["V", "residual"] and len(rows) == 6
    assert np.all(np.diff([float(r[1]) for r in rows[1:]]) < 0)
