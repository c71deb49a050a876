import json

import pytest

from quasi2d.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, main
from quasi2d.experiments import KINDS, ConfigError, ExperimentConfig


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


SMALL_SHIFT = {"kind": "index-suite", "params": {"shift": {"half_width": 32, "powers": [1], "window": 8, "guard": 4}}}


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == EXIT_OK
    out = capsys.readouterr().out
    assert all(k in out for k in KINDS)


def test_run_writes_report(tmp_path):
    cfg = _write(tmp_path, SMALL_SHIFT)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["passed"] and report["thresholds"]["shift"]["window"] == {"source": "config", "value": 8}
    assert (tmp_path / "o" / "indices.csv").exists()


def test_reports_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL_SHIFT)
    main(["run", cfg, "--out", str(tmp_path / "a")])
    main(["run", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"])
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("QUASI2D_OUT", str(tmp_path / "root"))
    cfg = _write(tmp_path, SMALL_SHIFT, "shiftcfg.json")
    assert main(["run", cfg]) == EXIT_OK
    assert (tmp_path / "root" / "shiftcfg" / "report.json").exists()


def test_failed_assertion_exit_code(tmp_path):
    cfg = _write(tmp_path, {"kind": "counterexample", "params": {"radii": [4, 8, 16]},
                            "expect": {"verdict": "decaying"}})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_ASSERT


@pytest.mark.parametrize("data,key", [
    ({"kind": "nope"}, "kind"),
    ({"kind": "contour-suite", "params": {"diam": {}}}, "seed"),
    ({"kind": "index-suite", "params": {"shift": {"powers": "x"}}}, "params.shift.powers"),
    ({"kind": "locality-audit", "params": {"operator": "R1", "sizes": [4, 8]}}, "params.sizes"),
    ({"kind": "index-suite", "params": {}}, "params"),
    ({"kind": "index-suite", "bogus": 1}, "bogus"),
])
def test_config_errors_name_the_key(tmp_path, capsys, data, key):
    cfg = _write(tmp_path, data)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert f"'{key}'" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.json")]) == EXIT_CONFIG


def test_validate(tmp_path):
    assert main(["validate", _write(tmp_path, SMALL_SHIFT)]) == EXIT_OK
    assert main(["validate", _write(tmp_path, {"kind": 3})]) == EXIT_CONFIG


def test_seed_override():
    cfg = ExperimentConfig.from_dict({"kind": "star-suite", "seed": 1}, seed_override=9)
    assert cfg.seed == 9
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "star-suite", "seed": -1})
