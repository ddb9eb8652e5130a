import json
import math

import pytest

from frontspeed import __version__
from frontspeed.cli import config_hash, load_config, main, resolve, run_sweep, sweep_points
from frontspeed.errors import InputError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_speed_json(capsys):
    code, out, _ = run(capsys, "speed", "--preset", "sine", "--amp", "2", "--rho", "1",
                       "--alpha", "1.0472", "--beta", "1.0472")
    assert code == 0
    d = json.loads(out)
    assert d["c_star"] > 2
    assert d["c_star"] == pytest.approx(2.3518, abs=1e-3)
    assert {"c_left", "c_right", "lambda_left", "lambda_right", "attaining"} <= set(d)
    assert d["software_version"] == __version__ and len(d["config_hash"]) == 16


def test_speed_writes_resolved_config(tmp_path, capsys):
    out = tmp_path / "speed.json"
    code, _, _ = run(capsys, "speed", "--preset", "zero", "--alpha", "1.0", "--beta", "1.2",
                     "--out", str(out))
    assert code == 0
    d = json.loads(out.read_text())
    cfg = json.loads((tmp_path / "speed.config.json").read_text())
    assert cfg["config_hash"] == d["config_hash"]
    assert cfg["reaction"] == "logistic" and cfg["seed"] == 0
    assert d["c_star"] == pytest.approx(2 / math.sin(1.0), rel=1e-9)


def test_missing_config(capsys, tmp_path):
    missing = tmp_path / "nope.json"
    code, _, err = run(capsys, "speed", "--config", str(missing))
    assert code == 1
    assert str(missing) in err


def test_degrees_rejected(capsys):
    assert run(capsys, "speed", "--alpha", "60", "--beta", "1.0")[0] == 1
    assert run(capsys, "speed", "--alpha", "60deg", "--beta", "1.0")[0] == 1


def test_outside_regime_needs_force(capsys):
    assert run(capsys, "speed", "--preset", "zero", "--alpha", "2.0", "--beta", "2.0")[0] == 1
    code, out, _ = run(capsys, "speed", "--preset", "zero", "--alpha", "2.0", "--beta", "2.0", "--force")
    assert code == 0
    assert json.loads(out)["rigorous"] is False


def test_config_file_and_overrides(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"field": {"preset": "zero"}, "rho": 4.0,
                             "cone": {"alpha": math.pi / 2, "beta": math.pi / 2}}))
    code, out, _ = run(capsys, "speed", "--config", str(p))
    assert code == 0 and json.loads(out)["c_star"] == pytest.approx(4.0)
    code, out, _ = run(capsys, "speed", "--config", str(p), "--rho", "1")
    assert json.loads(out)["c_star"] == pytest.approx(2.0)


def test_bad_json_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(InputError):
        load_config(p)


def test_kcurve_csv(tmp_path, capsys):
    out = tmp_path / "k.csv"
    code, _, _ = run(capsys, "kcurve", "--preset", "zero", "--lambda-min", "0.5", "--lambda-max", "2",
                     "--points", "4", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# software_version=")
    assert lines[1] == "lambda,k,k_over_lambda"
    lam, k, r = map(float, lines[2].split(","))
    assert (lam, k) == (0.5, pytest.approx(1.25)) and r == pytest.approx(2.5)
    assert len(lines) == 6


def test_profile_csv(tmp_path, capsys):
    out = tmp_path / "p.csv"
    code, stdout, _ = run(capsys, "profile", "--preset", "zero", "--c", "2.5", "--nx", "4",
                          "--hy", "0.125", "--out", str(out))
    assert code == 0
    d = json.loads(stdout)
    assert d["strip_speed"] == pytest.approx(2.5)
    lines = out.read_text().splitlines()
    assert lines[1] == "X,Y,phi"
    phi = [float(l.split(",")[2]) for l in lines[2:]]
    assert min(phi) >= 0 and max(phi) <= 1


def test_profile_subcritical_is_input_error(capsys):
    assert run(capsys, "profile", "--preset", "zero", "--c", "2.01")[0] == 1


def test_ansatz(tmp_path, capsys):
    cfg = tmp_path / "a.json"
    cfg.write_text(json.dumps({"field": {"preset": "zero"}, "cone": {"alpha": 1.0472, "beta": 1.0472},
                               "strip": {"nx": 8, "hy": 0.125},
                               "grid": {"nx": 64, "ny": 256, "x_periods": 8, "hy": 0.125}}))
    out = tmp_path / "ansatz.json"
    code, _, _ = run(capsys, "ansatz", "--config", str(cfg), "--out", str(out))
    assert code == 0
    d = json.loads(out.read_text())
    assert d["sandwich_ok"] is True
    assert d["c"] == pytest.approx(1.05 * 2 / math.sin(1.0472), rel=1e-9)


def test_simulate_outputs(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"field": {"preset": "zero"},
                               "grid": {"nx": 8, "ny": 256, "x_periods": 1, "hy": 0.125},
                               "time": {"t_end": 8.0}, "snapshot_every": 20}))
    out = tmp_path / "run"
    code, _, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(out))
    assert code == 0
    d = json.loads((out / "diagnostics.json").read_text())
    assert {"speed_fit", "min_dy_u", "ratio_inf", "angle_left", "angle_right"} <= set(d)
    assert (out / "config.resolved.json").is_file()
    ls = (out / "levelset.csv").read_text().splitlines()
    assert ls[1].startswith("t,y_half_col")
    assert any((out / "snapshots").iterdir())


def test_simulate_escape_is_numerical(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    # frame far too slow: the front runs out of the top of a short box
    cfg.write_text(json.dumps({"field": {"preset": "zero"}, "frame_speed": 0.0,
                               "grid": {"nx": 8, "ny": 64, "x_periods": 1, "hy": 0.125},
                               "time": {"t_end": 20.0}}))
    assert run(capsys, "simulate", "--config", str(cfg))[0] == 2


def test_asymptotics_csv(tmp_path, capsys):
    cfg = tmp_path / "h.json"
    cfg.write_text(json.dumps({"field": {"preset": "sine"}, "which": "homogenization",
                               "values": [1.0, 0.5]}))
    out = tmp_path / "scan.csv"
    code, stdout, _ = run(capsys, "asymptotics", "--config", str(cfg), "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "param,computed,predicted,deviation"
    assert len(lines) == 4
    assert json.loads(stdout)["predicted"] == pytest.approx(2.0)
    assert run(capsys, "asymptotics", "--which", "small-reaction")[0] == 1


def test_verify_trivial(capsys):
    code, out, _ = run(capsys, "verify", "--suite", "trivial")
    assert code == 0
    assert "FAIL" not in out and out.count("PASS") >= 5


def test_config_hash_stable():
    a = resolve("speed", {"rho": 1.0, "output": "x.json"})
    b = resolve("speed", {"rho": 1, "output": "y.json"})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(resolve("speed", {"rho": 2.0}))


SWEEP = {"task": "speed",
         "base": {"field": {"preset": "zero"}},
         "grid": {"cone.alpha": [0.5, 1.0, 1.5], "cone.beta": [1.0], "rho": [0.25, 1.0, 4.0]}}


def records(path):
    return [json.loads(l) for l in path.read_text().splitlines()]


def test_sweep_closed_form_and_idempotent(tmp_path):
    s = run_sweep(SWEEP, tmp_path)
    assert s["points"] == 9 and s["computed"] == 9 and s["failed"] == 0
    for rec in records(tmp_path / "sweep.jsonl"):
        a, b, rho = rec["inputs"]["cone.alpha"], rec["inputs"]["cone.beta"], rec["inputs"]["rho"]
        assert rec["outputs"]["c_star"] == pytest.approx(2 * math.sqrt(rho) / min(math.sin(a), math.sin(b)),
                                                         rel=1e-9)
        assert rec["software_version"] == __version__
    again = run_sweep(SWEEP, tmp_path)
    assert again["computed"] == 0 and again["skipped"] == 9
    assert len(records(tmp_path / "sweep.jsonl")) == 9


def test_sweep_records_failures(tmp_path):
    spec = {"task": "speed", "base": {"field": {"preset": "zero"}},
            "grid": {"cone.alpha": [1.0, 2.5], "cone.beta": [2.0]}}
    s = run_sweep(spec, tmp_path)
    assert s["failed"] == 1
    recs = records(tmp_path / "sweep.jsonl")
    errs = [r for r in recs if "error" in r]
    assert errs[0]["error"]["type"] == "OutsideExistenceRegime"
    assert any("outputs" in r for r in recs)


def test_sweep_reproducible_and_parallel(tmp_path):
    spec = {"task": "speed", "base": {"field": {"preset": "sine", "amplitude": 2.0}},
            "grid": {"cone.alpha": [1.0, 1.3], "cone.beta": [1.2]}}
    run_sweep(spec, tmp_path / "a")
    run_sweep(spec, tmp_path / "b")
    run_sweep(spec, tmp_path / "c", jobs=2)

    def body(p):
        return [json.dumps({k: v for k, v in r.items() if k != "timestamp"}, sort_keys=True)
                for r in records(p / "sweep.jsonl")]

    assert body(tmp_path / "a") == body(tmp_path / "b") == body(tmp_path / "c")


def test_sweep_cli_and_bad_spec(tmp_path, capsys, monkeypatch):
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(SWEEP))
    monkeypatch.setenv("FRONTSPEED_JOBS", "1")
    code, out, _ = run(capsys, "sweep", "--config", str(p), "--out", str(tmp_path / "o"))
    assert code == 0 and json.loads(out)["points"] == 9
    with pytest.raises(InputError):
        sweep_points({"task": "simulate", "grid": {"rho": [1]}})
    with pytest.raises(InputError):
        sweep_points({"task": "speed", "grid": {}})
