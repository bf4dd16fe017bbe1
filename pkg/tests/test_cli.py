import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxescape import cli
from proxescape.cli import CliConfig


def call(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def csv_rows(text):
    head, *rows = text.strip().splitlines()
    return head.split(","), [[float(c) for c in r.split(",")] for r in rows]


# -- run ------------------------------------------------------------------------


def test_run_shows_geometric_growth(capsys):
    code, out, _ = call(capsys, "run", "--problem", "absym", "--algo", "prox-point", "--mu", "0.25",
                        "--alpha", "0.9", "--x0", "0,0.5", "--max-iters", "8")
    assert code == 0
    head, rows = csv_rows(out)
    assert head == ["iter", "x_0", "x_1", "f", "env_grad_norm"]
    ys = np.array([r[2] for r in rows])
    np.testing.assert_allclose(ys[1:] / ys[:-1], 1.9, rtol=1e-14)


def test_run_rejects_large_mu(capsys):
    code, out, err = call(capsys, "run", "--problem", "absym", "--mu", "0.6", "--x0", "0,0.5")
    assert code == 2 and out == ""
    e = error_line(err)
    assert e["error"] == "ParameterError" and e["exit_code"] == 2 and e["message"]


def test_run_at_fixed_point_is_single_row(capsys):
    code, out, _ = call(capsys, "run", "--x0", "0,0")
    assert code == 0
    assert len(out.strip().splitlines()) == 2


def test_run_json_and_out_file(capsys, tmp_path):
    path = tmp_path / "traj.json"
    code, out, _ = call(capsys, "run", "--x0", "0.4,0", "--format", "json", "--out", str(path))
    assert code == 0 and out == ""
    d = json.loads(path.read_text())
    assert d["schema_version"] == "1" and d["terminated"] == "converged"


def test_run_csv_is_lossless(capsys):
    code, out, _ = call(capsys, "run", "--x0", "0.123456789012345,-0.3", "--max-iters", "3")
    _, rows = csv_rows(out)
    assert rows[0][1] == 0.123456789012345


def test_inner_solver_failure_exit_code(capsys, monkeypatch):
    from proxescape import errors

    def boom(cfg):
        raise errors.ConvergenceError("inner solve stalled")

    monkeypatch.setitem(cli.COMMANDS, "run", boom)
    code, _, err = call(capsys, "run")
    assert code == 3 and error_line(err)["error"] == "ConvergenceError"


# -- escape ---------------------------------------------------------------------


def test_escape_prox_gradient(capsys):
    code, out, _ = call(capsys, "escape", "--problem", "absym", "--algo", "prox-gradient", "--mu", "0.25",
                        "--alpha", "0.4", "--n-trials", "200", "--seed", "7")
    assert code == 0
    d = json.loads(out)
    assert d["schema_version"] == "1" and d["fraction_to_target"] == 0.0 and d["n_trials"] == 200


def test_escape_pathological_cone(capsys):
    code, out, _ = call(capsys, "escape", "--problem", "pathological:rho=2", "--mu", str(1 / 6),
                        "--alpha", "0.5", "--sampler", "cone", "--n-trials", "50")
    assert code == 0 and json.loads(out)["fraction_to_target"] == 1.0


def test_escape_zero_trials(capsys):
    code, out, _ = call(capsys, "escape", "--algo", "prox-gradient", "--alpha", "0.4", "--n-trials", "0")
    d = json.loads(out)
    assert code == 0 and d["n_trials"] == 0 and d["fraction_to_target"] == 0.0


def test_escape_is_byte_identical(capsys, tmp_path):
    argv = ["escape", "--algo", "prox-gradient", "--alpha", "0.4", "--n-trials", "30", "--seed", "11"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert call(capsys, *argv, "--out", str(a))[0] == 0
    assert call(capsys, *argv, "--out", str(b), "--workers", "3")[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_escape_csv(capsys):
    code, out, _ = call(capsys, "escape", "--algo", "prox-gradient", "--alpha", "0.4", "--n-trials", "3",
                        "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("trial,init_0,init_1,limit_0") and len(lines) == 4


def test_escape_rejects_excess_damping(capsys):
    code, _, err = call(capsys, "escape", "--algo", "prox-gradient", "--alpha", "0.9", "--n-trials", "2")
    assert code == 2 and error_line(err)["exit_code"] == 2


# -- spectrum, flowfield, cone, mba ---------------------------------------------------


@pytest.mark.parametrize("algo,alpha,top", [("prox-point", "0.9", 2.0), ("prox-gradient", "0.4", 1.5),
                                            ("prox-linear", "0.3", 1.5)])
def test_spectrum(capsys, algo, alpha, top):
    code, out, _ = call(capsys, "spectrum", "--algo", algo, "--alpha", alpha, "--x0", "0,0")
    d = json.loads(out)
    assert code == 0 and d["classification"] == "unstable"
    assert max(e[0] if isinstance(e, list) else e for e in d["eigenvalues"]) == pytest.approx(top, abs=1e-4)


def test_spectrum_away_from_fixed_point(capsys):
    code, _, err = call(capsys, "spectrum", "--x0", "0,1")
    assert code == 2 and error_line(err)["error"] == "PreconditionError"


def test_flowfield(capsys):
    code, out, _ = call(capsys, "flowfield", "--box", "0,0,1,1", "--resolution", "1")
    head, rows = csv_rows(out)
    assert code == 0 and head == ["x_0", "x_1", "d_0", "d_1"]
    np.testing.assert_allclose(rows[0], [0.0, 1.0, 0.0, 4.0], atol=1e-14)


def test_cone(capsys):
    code, out, _ = call(capsys, "cone", "--problem", "pathological:rho=2", "--mu", str(1 / 6),
                        "--alpha", "0.5", "--x0", "0,1", "--max-iters", "3")
    d = json.loads(out)
    assert code == 0 and d["max_abs_error"] <= 1e-15 and d["k"] == 3


def test_cone_needs_pathological(capsys):
    assert call(capsys, "cone")[0] == 2


def test_mba_csv(capsys):
    code, out, _ = call(capsys, "mba", "--tau", "5", "--alpha", "1", "--x0", "0.4,0", "--max-iters", "10")
    head, rows = csv_rows(out)
    assert code == 0
    assert head == ["iter", "env_value", "env_grad_norm", "decrease_residual", "rel_error_ratio"]
    assert all(r[3] >= -1e-8 for r in rows[:-1])


def test_mba_json_constants(capsys):
    code, out, _ = call(capsys, "mba", "--tau", "5", "--alpha", "1", "--x0", "0.3,0.2", "--tilt", "0.3,0.1",
                        "--format", "json", "--max-iters", "20")
    d = json.loads(out)
    assert code == 0 and d["rate_constant"] == pytest.approx(3 / 31.5, abs=1e-15)
    assert d["rate_bound_worst_slack"] >= 0


def test_mba_prox_linear(capsys):
    code, _, _ = call(capsys, "mba", "--algo", "prox-linear", "--tau", "10", "--x0", "0.5,0.1", "--alpha", "1")
    assert code == 0


@pytest.mark.parametrize("argv", [["mba"], ["mba", "--tau", "4"]])
def test_mba_parameter_errors(capsys, argv):
    code, _, err = call(capsys, *argv)
    assert code == 2 and error_line(err)["error"] == "ParameterError"


# -- verify ---------------------------------------------------------------------


def test_verify_default_passes(capsys):
    code, out, err = call(capsys, "verify")
    assert code == 0 and err == ""
    lines = out.strip().splitlines()
    assert all(line.startswith("[PASS]") for line in lines[:-1])
    assert {line.split()[1].split("/")[0] for line in lines[:-1]} == set(cli.verify.SUITES)


def test_verify_only_subset(capsys):
    code, out, _ = call(capsys, "verify", "--only", "moreau", "--format", "json")
    d = json.loads(out)
    assert code == 0 and {c["suite"] for c in d["checks"]} == {"moreau"}


def test_verify_coarse_fd_step_fails(capsys):
    code, out, err = call(capsys, "verify", "--only", "jacobian,moreau", "--fd-step", "1e-1")
    e = error_line(err)
    assert code == 1 and e["error"] == "CheckFailed"
    assert "jacobian/fd-accuracy" in e["message"]
    assert "[FAIL] jacobian/fd-accuracy" in out


def test_verify_unknown_suite(capsys):
    assert call(capsys, "verify", "--only", "nope")[0] == 2


# -- parsing and configuration --------------------------------------------------


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run", "--mu", "abc"], ["run", "--unknown"],
                                  ["run", "--format", "xml"], ["spectrum", "--format", "csv"],
                                  ["run", "--x0", "1,2,3"], ["flowfield", "--box", "0,1,2"],
                                  ["run", "--algo", "newton"]])
def test_bad_arguments_exit_2(capsys, argv):
    code, _, err = call(capsys, *argv)
    assert code == 2 and error_line(err)["exit_code"] == 2


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# test config\nmu = 0.1\nalpha = 0.3\nx0 = 0,0.5\nmax-iters = 2\n")
    resolved = cli.resolve_config(["run", "--config", str(cfg), "--alpha", "0.7"])
    assert resolved.mu == 0.1 and resolved.alpha == 0.7 and resolved.x0 == (0.0, 0.5)
    assert resolved.seed == CliConfig().seed
    code, out, _ = call(capsys, "run", "--config", str(cfg))
    _, rows = csv_rows(out)
    # y grows by 1 - alpha + alpha / (1 - 2 mu) per step
    assert rows[1][2] == pytest.approx(0.5 * (0.7 + 0.3 / 0.8), rel=1e-14)


@pytest.mark.parametrize("text", ["mu 0.1\n", "nope = 1\n", "n-trials = x\n"])
def test_bad_config_file(capsys, tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert call(capsys, "run", "--config", str(cfg))[0] == 2


def test_missing_config_file(capsys, tmp_path):
    assert call(capsys, "run", "--config", str(tmp_path / "none.cfg"))[0] == 2


finite = st.floats(-1e6, 1e6, allow_nan=False)
opt_vec = st.none() | st.lists(finite, min_size=1, max_size=4).map(tuple)
word = st.text(st.characters(whitelist_categories=("Ll", "Nd"), whitelist_characters="-:=."), min_size=1,
               max_size=12)


@settings(max_examples=200, deadline=None)
@given(cfg=st.builds(
    CliConfig, subcommand=st.sampled_from(cli.SUBCOMMANDS), problem=word.filter(lambda s: "#" not in s),
    algo=st.sampled_from(["prox-point", "prox-gradient", "prox-linear"]), mu=finite, alpha=finite,
    tau=st.none() | finite, x0=opt_vec, box=st.lists(finite, min_size=2, max_size=4).map(tuple),
    target=opt_vec, sampler=st.sampled_from(["box", "cone"]), n_trials=st.integers(0, 10 ** 6),
    max_iters=st.none() | st.integers(1, 10 ** 6), seed=st.integers(0, 2 ** 64 - 1), tilt=opt_vec,
    fd_step=st.none() | st.floats(1e-12, 1.0), resolution=st.integers(1, 500), workers=st.integers(1, 64),
    only=st.none() | st.lists(st.sampled_from(sorted(cli.verify.SUITES)), min_size=1, max_size=3).map(tuple),
    out=st.none() | st.just("out/run.csv"), format=st.none() | st.sampled_from(["csv", "json", "text"])))
def test_config_roundtrip(cfg):
    assert CliConfig.from_text(cfg.to_text()) == cfg
