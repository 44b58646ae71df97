import json
import os

import pytest

from rsjd.cli import ConfigError, config_from_dict, main, parse_config, run

MINIMAL = 'format_version = 1\ncommand = "simulate"\nseed = 7\n\n[model]\nbuiltin = "ou-benchmark"\n'


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _read(d, name="result.json"):
    with open(os.path.join(d, name)) as fh:
        return json.load(fh)


def test_minimal_config_gets_defaults(tmp_path):
    rc = parse_config(_write(tmp_path, MINIMAL))
    assert rc.command == "simulate" and rc.seed == 7
    assert rc.sim.dt == 1e-3 and rc.sim.small_jump_cutoff == 0.05
    assert rc.options["n_paths"] == 1000
    assert rc.quadrature.small_jump_radius == 1.0


def test_unknown_key_is_an_error(tmp_path):
    with pytest.raises(ConfigError, match="unknown key dtt"):
        parse_config(_write(tmp_path, MINIMAL + "\n[sim]\ndtt = 0.01\n"))
    with pytest.raises(ConfigError, match="unknown key colour"):
        parse_config(_write(tmp_path, "colour = 1\n" + MINIMAL))


def test_invariant_violation_is_named(tmp_path):
    with pytest.raises(ConfigError, match="ε ≤ 1"):
        parse_config(_write(tmp_path, MINIMAL + "\n[sim]\nsmall_jump_cutoff = 1.5\n"))


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(_write(tmp_path, 'format_version = 1\ncommand = "simulate"\nseed = = 7\n'))
    with pytest.raises(ConfigError, match="not found"):
        parse_config(str(tmp_path / "missing.toml"))


def test_structural_checks():
    with pytest.raises(ConfigError, match="format_version"):
        config_from_dict({"command": "simulate"})
    with pytest.raises(ConfigError, match="exactly one command"):
        config_from_dict({"format_version": 1, "command": "simulate", "hitting": {}})
    with pytest.raises(ConfigError, match="unknown builtin"):
        config_from_dict({"format_version": 1, "command": "simulate", "model": {"builtin": "bm"}})
    with pytest.raises(ConfigError, match="needs key q_bound"):
        config_from_dict({"format_version": 1, "command": "simulate",
                          "model": {"dim": 1, "regimes": 1, "drift": ["-x"], "diffusion": "1",
                                    "q": [["0"]]}})


def test_generator_eval_ou_quadratic(tmp_path):
    out = str(tmp_path / "out")
    cfg = MINIMAL.replace("simulate", "generator-eval") + \
        '\n[generator-eval]\nfunction = "x^2"\npoints = [[1.0], [2.0]]\n'
    assert main(["--config", _write(tmp_path, cfg), "--out", out]) == 0
    rows = _read(out)["results"]
    assert rows[0]["value"] == pytest.approx(0.0, abs=1e-12)
    assert rows[1]["value"] == pytest.approx(-6.0, abs=1e-12)


def test_expression_model_matches_builtin(tmp_path):
    out = str(tmp_path / "out")
    cfg = ('format_version = 1\ncommand = "generator-eval"\n\n[model]\ndim = 1\nregimes = 2\n'
           'drift = ["-x"]\ndiffusion = "sqrt(2)"\nq = [["0", "1"], ["2", "0"]]\nq_bound = 2.0\n\n'
           '[generator-eval]\nfunction = "case(x^2, 0)"\npoints = [[1.5]]\n')
    assert main(["--config", _write(tmp_path, cfg), "--out", out]) == 0
    rows = _read(out)["results"]
    # regime 1: -2x^2 + 2 - x^2; regime 2: 2 (x^2 - 0)
    assert rows[0]["value"] == pytest.approx(-2 * 2.25 + 2 - 2.25, abs=1e-12)
    assert rows[1]["value"] == pytest.approx(2 * 2.25, abs=1e-12)


def test_simulate_is_deterministic(tmp_path):
    path = _write(tmp_path, MINIMAL + '\n[sim]\ndt = 0.01\n\n[simulate]\nn_paths = 200\nexport_paths = 2\n')
    out = str(tmp_path / "out")
    snaps = []
    for _ in range(2):
        assert main(["--config", path, "--out", out]) == 0
        files = {}
        for name in sorted(os.listdir(out)):
            with open(os.path.join(out, name), "rb") as fh:
                files[name] = fh.read()
        man = json.loads(files.pop("manifest.json"))
        man.pop("wall_time_s")
        files["manifest"] = json.dumps(man, sort_keys=True).encode()
        snaps.append(files)
    assert snaps[0] == snaps[1]
    assert set(snaps[0]) == {"result.json", "path_0.csv", "path_1.csv", "manifest"}
    man = _read(out, "manifest.json")
    assert man["seed"] == 7 and man["exit_status"] == 0 and "numpy" in man["versions"]
    assert man["outputs"] == ["result.json", "path_0.csv", "path_1.csv"]
    assert _read(out)["n_paths"] == 200


def test_manifest_replay_and_overrides(tmp_path):
    path = _write(tmp_path, MINIMAL + '\n[sim]\ndt = 0.01\n\n[simulate]\nn_paths = 100\n')
    first, again, other = (str(tmp_path / n) for n in ("a", "b", "c"))
    assert main(["--config", path, "--out", first]) == 0
    assert main(["--config", os.path.join(first, "manifest.json"), "--out", again]) == 0
    assert _read(first) == _read(again)
    assert main(["--config", path, "--out", other, "--seed", "8"]) == 0
    assert _read(other, "manifest.json")["seed"] == 8
    assert _read(other) != _read(first)


def test_threads_do_not_change_results(tmp_path):
    path = _write(tmp_path, MINIMAL + '\n[sim]\ndt = 0.01\n\n[simulate]\nn_paths = 100\n')
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["--config", path, "--out", a]) == 0
    assert main(["--config", path, "--out", b, "--threads", "4"]) == 0
    assert _read(a) == _read(b)


def test_negative_verdict_exit_status(tmp_path):
    out = str(tmp_path / "out")
    cfg = MINIMAL.replace("simulate", "check-lyapunov") + \
        '\n[check-lyapunov]\ncriterion = "C1"\nfunction = "x^2 / 20"\nr_min = 2.0\nr_max = 3.0\nradii = 8\n'
    assert main(["--config", _write(tmp_path, cfg), "--out", out]) == 2
    assert _read(out)["status"] == "fails"


def test_error_exit_status_and_json(tmp_path):
    out = str(tmp_path / "out")
    cfg = MINIMAL.replace("simulate", "generator-eval") + '\n[generator-eval]\nfunction = "x^2 +"\n'
    assert main(["--config", _write(tmp_path, cfg), "--out", out]) == 1
    err = _read(out, "error.json")
    assert err["error"] == "ConfigError" and "column" in err["message"]
    assert main(["--out", out]) == 1


def test_validate_command(tmp_path):
    rc = config_from_dict({"format_version": 1, "command": "validate",
                           "model": {"builtin": "example-5.2"},
                           "validate": {"sample_count": 50}}, out=str(tmp_path / "v"))
    assert run(rc) == 0
    assert _read(rc.output_dir)["passed"]


def test_hitting_command_writes_survival(tmp_path):
    rc = config_from_dict({"format_version": 1, "command": "hitting", "seed": 3,
                           "sim": {"dt": 0.01},
                           "hitting": {"x0": [3.0], "n_paths": 200, "horizons": [4.0, 8.0]}},
                          out=str(tmp_path / "h"))
    assert run(rc) == 0
    with open(os.path.join(rc.output_dir, "survival.csv")) as fh:
        assert fh.readline() == "t,survival\n"


def test_invariant_command(tmp_path):
    rc = config_from_dict({"format_version": 1, "command": "invariant", "seed": 2,
                           "sim": {"dt": 0.005},
                           "cycles": {"n_cycles": 40, "chains": 4, "warmup_cycles": 2},
                           "invariant": {"positivity_balls": [{"center": [0.0], "radius": 0.5}]}},
                          out=str(tmp_path / "inv"))
    assert run(rc) == 0
    res = _read(rc.output_dir)
    assert res["positivity"][0]["status"] == "positive"
    with open(os.path.join(rc.output_dir, "invariant.csv")) as fh:
        assert fh.readline().strip() == "bin_center_1,regime,weight,se"


@pytest.mark.slow
def test_reproduce_example_53(tmp_path):
    out = str(tmp_path / "rep")
    assert main(["reproduce", "example-5.3", "--out", out, "--seed", "1"]) == 0
    with open(os.path.join(out, "verdicts.csv")) as fh:
        assert fh.read() == ("model,verdict\nexample-5.3-diffusion,transience-suspected\n"
                             "example-5.3-stabilized,positive-recurrent-evidence\n")
