import csv
import json
from pathlib import Path

import numpy as np
import pytest

from bbmmed.cli import main
from bbmmed.config import ConfigError, load_config, load_dict, load_text
from bbmmed.core import RowSumError

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

SMALL = """\
message: {c: 1.0, xi_low: 0.2, xi_high: 0.8}
network:
  alpha: 0.3
  W: [[0.2, 0.3, 0.2], [0.7, 0.2, 0.1], [0.1, 0.1, 0.8]]
  U: [[0.8, 0.2], [0.2, 0.2], [0.2, 0.8]]
  o0: [0.2, 0.2, 0.8]
grid: {dt: 1.0e-3, horizon: 1.0}
opinion_grid: {dt: 1.0e-2, horizon: 20.0}
ensemble: {n_runs: 300, seed: 4, checkpoints: [0.01, 0.05]}
renormalize_rows: true
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_shipped_configs_load():
    for p in sorted(CONFIGS.glob("*.yaml")):
        load_config(p)


def test_round_trip_through_metadata(tmp_path):
    cfg = load_text(SMALL)
    again = load_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.equivalent(cfg)
    np.testing.assert_array_equal(again.network.W, cfg.network.W)


def test_error_reports_line_and_key(tmp_path):
    bad = SMALL.replace("n_runs: 300", "n_runs: many")
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, bad))
    msg = str(exc.value)
    assert "cfg.yaml:9" in msg and "ensemble.n_runs" in msg


@pytest.mark.parametrize("edit, fragment", [
    (("grid: {dt: 1.0e-3, horizon: 1.0}", "grid: {dt: 1.0e-3}"), "n_steps"),
    (("c: 1.0,", "c: -1.0,"), "c must be positive"),
    (("message:", "mesage:"), "unknown section"),
    (("o0: [0.2, 0.2, 0.8]", "o0: [0.2, 0.2]"), "expected 3 entries"),
    (("checkpoints: [0.01, 0.05]", "checkpoints: [0.0105]"), "not a point of the grid"),
    (("renormalize_rows: true", "renormalize_rows: maybe"), "true or false"),
])
def test_config_errors(edit, fragment):
    with pytest.raises(ConfigError, match=fragment):
        load_text(SMALL.replace(*edit))


def test_unnormalised_matrix_without_flag():
    with pytest.raises(RowSumError):
        load_text(SMALL.replace("renormalize_rows: true", "renormalize_rows: false"))
    cfg = load_text(SMALL.replace("renormalize_rows: true", ""), renormalize_rows=True)
    assert cfg.renormalize_rows


def test_invalid_yaml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_text("message: [1, 2\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.yaml")


def _run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def test_validate_exit_codes(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    code, out = _run(["validate", "--config", str(cfg)], tmp_path)
    assert code == 0, capsys.readouterr().out
    report = json.loads((out / "validation_report.json").read_text())
    assert report["passed"] and "opinion" in report
    code, _ = _run(["validate", "--config", str(cfg), "--n-runs", "5"], tmp_path, "tiny")
    assert code == 1
    broken = _write(tmp_path, SMALL.replace("renormalize_rows: true", ""), "broken.yaml")
    code, _ = _run(["validate", "--config", str(broken)], tmp_path, "broken")
    assert code == 2
    assert "RowSumError" in capsys.readouterr().err
    code, _ = _run(["validate", "--config", str(broken), "--renormalize-rows"], tmp_path, "fixed")
    assert code == 0


def test_simulate_message_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    _run(["simulate-message", "--config", str(cfg), "--raw-paths", "3"], tmp_path, "a")
    _run(["simulate-message", "--config", str(cfg), "--raw-paths", "3", "--threads", "2"], tmp_path, "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "message_stats.csv" in files and "message_paths.csv" in files and "message_pdf_t0p01.csv" in files
    for name in files:
        if name != "metadata.json":
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert load_dict(meta["config"]).equivalent(load_text(SMALL))


def test_seed_flag_changes_output(tmp_path):
    cfg = _write(tmp_path, SMALL)
    _run(["simulate-message", "--config", str(cfg)], tmp_path, "a")
    _run(["simulate-message", "--config", str(cfg), "--seed", "99"], tmp_path, "b")
    assert (tmp_path / "a" / "message_stats.csv").read_bytes() != (tmp_path / "b" / "message_stats.csv").read_bytes()


def test_zero_length_grid(tmp_path):
    cfg = _write(tmp_path, "message: {c: 1.0, xi_low: 0.2, xi_high: 0.8}\ngrid: {dt: 0.01, n_steps: 0}\n"
                           "ensemble: {n_runs: 10}\n")
    code, out = _run(["simulate-message", "--config", str(cfg)], tmp_path)
    assert code == 0
    rows = list(csv.reader(open(out / "message_stats.csv")))
    assert len(rows) == 2 and rows[1][0] == "0.0"


def test_output_confined_to_directory(tmp_path):
    cfg = _write(tmp_path, SMALL)
    before = set(tmp_path.iterdir())
    for cmd in ("message-stats", "opinion-stats", "simulate-opinions"):
        assert _run([cmd, "--config", str(cfg)], tmp_path, "only")[0] == 0
    assert set(tmp_path.iterdir()) - before == {tmp_path / "only"}


def test_env_default_output(tmp_path, monkeypatch):
    cfg = _write(tmp_path, SMALL)
    monkeypatch.setenv("BBMMED_OUT", str(tmp_path / "env"))
    assert main(["message-stats", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "message_analytic.csv").exists()


def test_message_stats_symmetric_start(tmp_path):
    cfg = _write(tmp_path, "message: {c: 1.0, fixed_s0: 0.5}\ngrid: {dt: 0.01, horizon: 3.0}\n")
    code, out = _run(["message-stats", "--config", str(cfg)], tmp_path)
    assert code == 0
    data = np.genfromtxt(out / "message_analytic.csv", delimiter=",", names=True)
    np.testing.assert_allclose(data["hit0"], data["hit1"], atol=1e-13)


def test_alpha_one_opinions_equal_degroot(tmp_path):
    cfg = _write(tmp_path, SMALL.replace("alpha: 0.3", "alpha: 1.0"))
    _run(["simulate-opinions", "--config", str(cfg), "--n-runs", "50"], tmp_path)
    _run(["opinion-stats", "--config", str(cfg)], tmp_path)
    sim = np.genfromtxt(tmp_path / "out" / "opinion_stats.csv", delimiter=",", names=True)
    base = np.genfromtxt(tmp_path / "out" / "degroot_baseline.csv", delimiter=",", names=True)
    times = np.unique(sim["time"])
    np.testing.assert_allclose(times, base["time"])
    for a in (1, 2, 3):
        np.testing.assert_allclose(sim["mean"][sim["agent"] == a], base[f"o_{a}"], atol=1e-12)
    assert np.all(sim["variance"] == 0)


def test_opinion_stats_limits(tmp_path):
    cfg = _write(tmp_path, SMALL)
    _run(["opinion-stats", "--config", str(cfg)], tmp_path)
    lim = json.loads((tmp_path / "out" / "opinion_limits.json").read_text())
    assert lim["mean_limit"] == [0.5, 0.5, 0.5]
    assert len(lim["variance_limit"]) == 3


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate-message"])
    assert exc.value.code == 2
    assert main(["message-stats", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
    assert main(["reproduce-paper", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_network_required(tmp_path):
    cfg = _write(tmp_path, "message: {c: 1.0, xi_low: 0.2, xi_high: 0.8}\ngrid: {dt: 0.01, n_steps: 5}\n")
    assert _run(["opinion-stats", "--config", str(cfg)], tmp_path)[0] == 2
