import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptfeeder import cli
from ptfeeder.propagator import PropagationAbort
from ptfeeder.stationary import NoConvergenceError

SMALL = ["--n-bins", "4096", "--half-width", "30"]
KAPPA_EVEN = 0.6261111408655937


def run(argv, capsys):
    code = cli.run_subcommand(argv)
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 else json.loads(out.err))


def test_convert_time(tmp_path, capsys):
    code, res = run(["convert-time", "45", "--output-dir", str(tmp_path)], capsys)
    assert code == 0 and res["ms"] == pytest.approx(123.0, abs=1e-12)
    code, res = run(["convert-time", "10", "--scale", "2.7", "--output-dir", str(tmp_path)], capsys)
    assert res["ms"] == pytest.approx(27.0, abs=1e-12)


def test_state_matches_linear_oracle(tmp_path, capsys):
    code, res = run(["state", "--g", "0", "--gamma", "0", "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    assert abs(res["mu"][0] + KAPPA_EVEN**2) < 1e-8
    man = json.loads((tmp_path / "state" / "manifest.json").read_text())
    assert man["exit_code"] == 0 and len(man["config_sha256"]) == 64
    assert {"numpy", "scipy", "numba", "ptfeeder"} <= set(man["versions"])
    cfg = cli.ExperimentConfig.from_dict(man["config"])
    assert cfg.digest() == man["config_sha256"]


def test_outputs_are_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        run(["state", "--gamma", "0.1", *SMALL, "--output-dir", str(tmp_path / d)], capsys)
    a = (tmp_path / "a" / "state" / "state.csv").read_bytes()
    assert a == (tmp_path / "b" / "state" / "state.csv").read_bytes()
    assert a.splitlines()[0] == b"x,re_psi,im_psi"


def test_env_var_sets_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    code, _ = run(["convert-time", "1"], capsys)
    assert code == 0
    assert (tmp_path / "env" / "convert-time" / "manifest.json").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"well": {"a": 1.1, "bogus": 1}}))
    code, err = run(["state", "--config", str(bad), "--output-dir", str(tmp_path)], capsys)
    assert code == 2 and err["error"] == "ConfigError"
    code, _ = run(["nosuchcommand"], capsys)
    assert code == 2
    code, _ = run(["evolve", "--dt", "1e-2", "--output-dir", str(tmp_path)], capsys)
    assert code == 2
    bad.write_text(json.dumps({"solver": {"critical_tol": -1}}))
    code, _ = run(["critical", "--config", str(bad), "--output-dir", str(tmp_path)], capsys)
    assert code == 2


def test_solver_and_abort_exit_codes(tmp_path, capsys, monkeypatch):
    def no_conv(*a):
        raise NoConvergenceError("stuck")

    def abort(*a):
        raise PropagationAbort("blew up", 1.5)

    monkeypatch.setitem(cli.COMMANDS, "state", no_conv)
    code, err = run(["state", "--output-dir", str(tmp_path)], capsys)
    assert code == 3 and err["error"] == "NoConvergenceError"
    monkeypatch.setitem(cli.COMMANDS, "evolve", abort)
    code, err = run(["evolve", "--output-dir", str(tmp_path)], capsys)
    assert code == 4
    man = json.loads((tmp_path / "evolve" / "manifest.json").read_text())
    assert man["exit_code"] == 4


def test_spectrum_and_critical_outputs(tmp_path, capsys):
    code, res = run(["spectrum", "--gamma", "0.25:0.4:0.05", *SMALL,
                     "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    lines = (tmp_path / "spectrum" / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "gamma,branch,mu_re,mu_im,residual"
    branches = {ln.split(",")[1] for ln in lines[1:]}
    assert branches == {"ground", "excited", "broken_plus", "broken_minus"}
    assert all(float(ln.split(",")[4]) < 1e-9 for ln in lines[1:])
    code, res = run(["critical", *SMALL, "--output-dir", str(tmp_path)], capsys)
    assert code == 0 and res["gamma_c_star"] < res["gamma_c"]
    assert res["parameters"]["a"] == 1.1 and res["bracket_width"] <= 1e-5


def test_feeders_two_and_single(tmp_path, capsys):
    code, res = run(["feeders", "--mode", "two", "--amplitude", "0.2", *SMALL,
                     "--output-dir", str(tmp_path)], capsys)
    assert code == 0 and max(res["residuals"]) < 1e-8
    head = (tmp_path / "feeders" / "system.csv").read_text().splitlines()[0]
    assert head == "x,re_psi1,im_psi1,re_psi2,im_psi2,re_psi3,im_psi3"
    code, res = run(["feeders", "--mode", "single", "--branch", "excited", "--psi2-at-0", "0.2",
                     *SMALL, "--output-dir", str(tmp_path)], capsys)
    assert code == 0 and res["gamma"] == pytest.approx(res["gamma_tilde"])


def test_evolve_short_run(tmp_path, capsys):
    code, res = run(["evolve", "--feeder-mode", "two", "--amplitude", "0.3", "--t-final", "0.05",
                     "--snapshot-every", "1", *SMALL, "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    assert res["classification"] == "stable" and res["lifetime"] == pytest.approx(0.05)
    rec = np.loadtxt(tmp_path / "evolve" / "record.csv", delimiter=",", skiprows=1)
    assert rec.shape[1] == 1 + 3 + 3 + 1
    assert list((tmp_path / "evolve" / "frames").glob("frame_*.csv"))


def test_parse_range():
    assert np.allclose(cli.parse_range("0:0.45:0.005"), np.arange(91) * 0.005)
    assert cli.parse_range("0.3").tolist() == [0.3]
    with pytest.raises(cli.ConfigError):
        cli.parse_range("1:0:0.1")


@given(st.floats(0.5, 2.0), st.floats(-2.0, -0.2), st.floats(0.0, 0.5), st.floats(0.0, 3.0),
       st.sampled_from([1024, 4096, 16384]), st.floats(1e-6, 1e-4), st.integers(0, 2**31))
def test_config_round_trip(a, V, gamma, g, nb, dt, seed):
    cfg = cli.ExperimentConfig(cli.WellConfig(a, V, gamma, g), cli.GridConfig(40.0, nb),
                               propagation={"dt": dt}, seed=seed)
    text = json.dumps(cfg.to_dict())
    back = cli.ExperimentConfig.from_dict(json.loads(text))
    assert back == cfg and back.digest() == cfg.digest()
