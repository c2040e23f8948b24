import json

import pytest
import yaml

from hydrosta import cli


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _short(tmp_path, **extra):
    data = {"preset": "paper-linear", "horizon": 1.0, "output_dir": str(tmp_path / "out"),
            "noise": {"enabled": True}}
    data.update(extra)
    return _write(tmp_path, "short.yaml", data)


def test_synthesize_writes_certificate(tmp_path, capsys):
    code = cli.main(["synthesize", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    files = list((tmp_path / "synthesis").glob("*/gains.json"))
    assert len(files) == 1
    payload = json.loads(files[0].read_text())
    assert payload["surface"]["certificate"]["passed"]
    assert "lambda_max(M_k)" in capsys.readouterr().out


def test_synthesize_infeasible_exit_code(tmp_path):
    cfg = _write(tmp_path, "bad.yaml", {"preset": "paper-nominal", "synthesis": {
        "Psi": 50.0, "h1": 1.0, "h2": 1.01, "theta": 0.0}})
    assert cli.main(["synthesize", "--config", cfg, "--out", str(tmp_path)]) == \
        cli.EXIT_INFEASIBLE


def test_config_errors_exit_code(tmp_path):
    assert cli.main(["simulate", "--preset", "nope"]) == cli.EXIT_CONFIG
    cfg = _write(tmp_path, "bad.yaml", {"synthesis": {"h1": 5.0, "h2": 1.0}})
    assert cli.main(["synthesize", "--config", cfg]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--sweep", "bogus=1,2", "--config", _short(tmp_path)]) == \
        cli.EXIT_CONFIG


def test_blow_up_exit_code(tmp_path):
    cfg = _write(tmp_path, "blow.yaml", {
        "preset": "paper-nominal", "controller": "relay", "horizon": 0.5,
        "initial_state": [0, 0, 9.99e6, 0, 0], "F_L": [[0.0, 0.5, -1e6]],
        "output_dir": str(tmp_path / "out")})
    assert cli.main(["simulate", "--config", cfg, "--no-plot"]) == cli.EXIT_BLOWUP
    assert list((tmp_path / "out" / "runs").glob("*/partial_trace.csv"))


def test_simulate_is_cached(tmp_path, capsys):
    cfg = _short(tmp_path)
    assert cli.main(["simulate", "--config", cfg]) == cli.EXIT_OK
    first = capsys.readouterr().out
    runs = list((tmp_path / "out" / "runs").iterdir())
    assert len(runs) == 1
    d = runs[0]
    for name in ("trace.csv", "trace.meta.json", "report.json", "config.yaml", "panels.svg"):
        assert (d / name).exists(), name
    before = {p.name: p.stat().st_mtime_ns for p in d.iterdir()}
    assert cli.main(["simulate", "--config", cfg]) == cli.EXIT_OK
    second = capsys.readouterr().out
    assert first.startswith("new run") and second.startswith("cached run")
    assert {p.name: p.stat().st_mtime_ns for p in d.iterdir()} == before
    report = json.loads((d / "report.json").read_text())
    assert report["config_hash"] == d.name


def test_seed_changes_run(tmp_path):
    cfg = _short(tmp_path)
    cli.main(["simulate", "--config", cfg, "--no-plot"])
    cli.main(["simulate", "--config", cfg, "--no-plot", "--seed", "7"])
    assert len(list((tmp_path / "out" / "runs").iterdir())) == 2


def test_compare_identical_configs(tmp_path):
    cfg = _short(tmp_path)
    assert cli.main(["compare", "--config", cfg, "--config", cfg, "--no-plot"]) == cli.EXIT_OK
    report = json.loads(next((tmp_path / "out" / "compare").glob("*/report.json")).read_text())
    assert report["a"]["report"]["performance"] == report["b"]["report"]["performance"]
    assert report["mu_e_ratio_smooth"] == 1.0


def test_compare_rejects_mismatched_profiles(tmp_path):
    a = _short(tmp_path)
    b = _write(tmp_path, "b.yaml", {"preset": "paper-linear", "horizon": 1.0,
                                    "profile": {"preset": "constant",
                                                "args": {"value": 0.0, "t_final": 1.0}}})
    assert cli.main(["compare", "--config", a, "--config", b]) == cli.EXIT_CONFIG


def test_compare_default_against_vgsta(tmp_path):
    cfg = _short(tmp_path)
    assert cli.main(["compare", "--config", cfg]) == cli.EXIT_OK
    out = next((tmp_path / "out" / "compare").iterdir())
    report = json.loads((out / "report.json").read_text())
    assert report["b"]["label"].startswith("vgsta")
    assert "control_amplitude" in report
    assert (out / "overlay.svg").exists()


def test_sweep_and_analyze_and_plot(tmp_path, capsys):
    cfg = _short(tmp_path)
    assert cli.main(["simulate", "--config", cfg, "--sweep", "rho=5,10", "--jobs", "1"]) == 0
    sweep = next((tmp_path / "out" / "sweeps").glob("*/sweep.json"))
    data = json.loads(sweep.read_text())
    assert [r["value"] for r in data["results"]] == [5.0, 10.0]
    trace = next((tmp_path / "out" / "runs").glob("*/trace.csv"))
    capsys.readouterr()
    assert cli.main(["analyze", "--trace", str(trace), "--window", "0.5", "1.0"]) == 0
    assert json.loads(capsys.readouterr().out)["performance"]["window"] == [0.5, 1.0]
    svg = tmp_path / "p.svg"
    assert cli.main(["plot", "--trace", str(trace), "--out", str(svg)]) == 0
    assert svg.read_text().lstrip().startswith("<?xml")


def test_chatter_command(capsys):
    assert cli.main(["chatter", "--decades", "1"]) == 0
    out = capsys.readouterr().out
    assert "phi_d" in out and "gamma_a" in out


def test_parse_sweep():
    assert cli.parse_sweep("rho=2,5,10,20") == (("sta", "rho"), [2.0, 5.0, 10.0, 20.0])
    assert cli.parse_sweep("relay.K_s=1") == (("relay", "K_s"), [1.0])
    with pytest.raises(cli.ConfigError):
        cli.parse_sweep("rho")
