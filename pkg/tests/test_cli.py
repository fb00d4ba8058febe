import json
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksobs.cli import RunConfig, main
from ksobs.harness import read_results
from ksobs.presets import PRESETS
from ksobs.solver import read_trajectory, write_trajectory
from test_chaos import mode_rates


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def cases_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("cases")
    assert main(["gen-cases", "--preset", "L22", "--seed", "3", "--out", str(out), "--refs", "1",
                 "--guesses", "4", "--total-time", "400", "--burn-in", "100"]) == 0
    return out / "cases_L22.json"


# -- simulate -------------------------------------------------------------------

def test_zero_initial_state_stays_zero(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--u0", "zero", "--steps", 25, "--out", tmp_path)
    states, L, dt = read_trajectory(tmp_path / "trajectory.kstraj")
    assert code == 0 and states.shape == (26, 64) and not states.any()
    assert (L, dt) == (22.0, 0.1)
    meta = json.loads((tmp_path / "trajectory.kstraj.json").read_text())
    assert meta["config"]["seed"] == 0 and meta["config"]["preset"] == "L22" and meta["steps"] == 25


def test_same_seed_is_byte_identical(tmp_path, capsys):
    args = ["simulate", "--seed", 11, "--burn-in", 20, "--time", 5]
    run(capsys, *args, "--out", tmp_path / "a")
    run(capsys, *args, "--out", tmp_path / "b")
    a = (tmp_path / "a" / "trajectory.kstraj").read_bytes()
    assert a == (tmp_path / "b" / "trajectory.kstraj").read_bytes()
    run(capsys, *args, "--out", tmp_path / "a")
    assert (tmp_path / "a" / "trajectory.kstraj").read_bytes() == a
    run(capsys, "simulate", "--seed", 12, "--burn-in", 20, "--time", 5, "--out", tmp_path / "c")
    assert (tmp_path / "c" / "trajectory.kstraj").read_bytes() != a


def test_file_size_arithmetic(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--u0", "zero", "--time", 10000, "--out", tmp_path)
    K = 100000
    assert code == 0
    assert (tmp_path / "trajectory.kstraj").stat().st_size == 40 + 8 * 64 * (K + 1)


def test_initial_state_from_file(tmp_path, capsys):
    u = 0.5 * np.cos(2 * np.pi * np.arange(64) / 64)
    write_trajectory(tmp_path / "u0.kstraj", np.array([np.zeros(64), u]), 22.0, 0.1)
    code, _, _ = run(capsys, "simulate", "--u0", tmp_path / "u0.kstraj", "--steps", 0, "--out", tmp_path / "o")
    states, _, _ = read_trajectory(tmp_path / "o" / "trajectory.kstraj")
    assert code == 0 and np.array_equal(states[0], u)


def test_blow_up_exits_two(tmp_path, capsys):
    write_trajectory(tmp_path / "big.kstraj", np.full((1, 64), 2e6), 22.0, 0.1)
    code, _, err = run(capsys, "simulate", "--u0", tmp_path / "big.kstraj", "--steps", 5, "--out", tmp_path / "o")
    assert code == 2 and "step 1" in err


def test_custom_preset(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--preset", "custom", "--L", 30, "--n", 32, "--dt", 0.05, "--p", 8,
                     "--u0", "zero", "--steps", 3, "--out", tmp_path)
    states, L, dt = read_trajectory(tmp_path / "trajectory.kstraj")
    assert code == 0 and states.shape == (4, 32) and (L, dt) == (30.0, 0.05)
    code, _, err = run(capsys, "simulate", "--preset", "custom", "--L", 30, "--out", tmp_path)
    assert code == 1 and "--n" in err


# -- usage errors ---------------------------------------------------------------

@pytest.mark.parametrize("text", ["steps 5\n", "bogus_key = 3\n", " = 4\n"])
def test_malformed_config_leaves_no_files(tmp_path, capsys, text):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    out = tmp_path / "out"
    code, _, err = run(capsys, "simulate", "--config", cfg, "--out", out)
    assert code == 1 and err and not out.exists()


def test_config_values_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# zero run\nu0 = zero  # no burn-in needed\nsteps = 4\n")
    run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "a")
    assert read_trajectory(tmp_path / "a" / "trajectory.kstraj")[0].shape == (5, 64)
    run(capsys, "simulate", "--config", cfg, "--steps", 2, "--out", tmp_path / "b")
    assert read_trajectory(tmp_path / "b" / "trajectory.kstraj")[0].shape == (3, 64)


@pytest.mark.parametrize("argv", [
    [],
    ["simulate", "--preset", "L99"],
    ["simulate", "--steps", "x"],
    ["simulate", "--jobs", "0"],
    ["frobnicate"],
    ["reconstruct", "--cases", "/nonexistent/cases.json"],
    ["epsilon-star", "--results", "/nonexistent/results.csv"],
])
def test_usage_errors_exit_one(tmp_path, capsys, argv):
    code, _, err = run(capsys, *argv, *(["--out", tmp_path / "o"] if argv else []))
    assert code == 1 and err
    assert "linear-test" not in err


def test_unknown_optimizer_rejected(capsys, cases_file, tmp_path):
    code, _, err = run(capsys, "reconstruct", "--cases", cases_file, "--optimizer", "adam", "--out", tmp_path)
    assert code == 1 and "usage:" in err and "ncn" in err


@settings(max_examples=100)
@given(
    st.sampled_from(["simulate", "lyapunov", "campaign"]),
    st.sampled_from(["L22", "L44", "L66", "custom"]),
    st.integers(0, 2**31),
    st.dictionaries(st.from_regex(r"[a-z][a-z_]{0,8}", fullmatch=True).filter(
        lambda k: k not in ("command", "preset", "seed", "out")),
        st.one_of(st.integers(-10**6, 10**6), st.floats(allow_nan=False, allow_infinity=False),
                  st.booleans(), st.text(max_size=8), st.none()), max_size=6),
)
def test_run_config_round_trip(command, preset, seed, options):
    rc = RunConfig(command, preset, seed, "/tmp/out", options)
    text = rc.to_text()
    assert RunConfig.from_text(text) == rc
    assert RunConfig.from_text(text).to_text() == text


# -- diagnostics ----------------------------------------------------------------

def test_linear_test_preset_matches_analytic_rates(tmp_path, capsys):
    code, out, _ = run(capsys, "lyapunov", "--preset", "linear-test", "--num-exponents", 8, "--horizon", 40,
                       "--out", tmp_path)
    rec = json.loads((tmp_path / "lyapunov.json").read_text())
    assert code == 0 and "l1 =" in out
    assert np.max(np.abs(np.array(rec["exponents"]) - mode_rates(PRESETS["L22"].config, 8))) < 1e-8
    assert rec["config"]["preset"] == "linear-test"


def test_lyapunov_guard_exits_one(tmp_path, capsys):
    code, _, err = run(capsys, "lyapunov", "--num-exponents", 100, "--horizon", 100, "--out", tmp_path)
    assert code == 1 and "num_exponents" in err


def test_attractor_report(tmp_path, capsys):
    code, _, _ = run(capsys, "attractor", "--total-time", 300, "--burn-in", 100, "--out", tmp_path)
    rec = json.loads((tmp_path / "attractor.json").read_text())
    assert code == 0 and rec["sample_count"] == 200 and rec["radius"] > 0 and len(rec["center"]) == 64


# -- reconstruction and campaigns -------------------------------------------------

def test_truth_as_guess(tmp_path, capsys, cases_file):
    code, out, _ = run(capsys, "reconstruct", "--cases", cases_file, "--truth-as-guess", "--iters", 3,
                       "--out", tmp_path)
    loss = float(re.search(r"final loss = (\S+)", out).group(1))
    assert code == 0 and loss < 1e-20
    assert "e_u = " in out and "CS_U = " in out
    (row,) = read_results(tmp_path / "result.csv")
    assert row.guess == -1 and row.final_loss == pytest.approx(loss, rel=1e-6)
    assert row.trial_id == "L22-4x4-ncn-pp-r00-gtruth"
    assert (tmp_path / "trace.csv").read_text().startswith("iter,loss,grad_norm")


@pytest.mark.parametrize("optimizer", ["gd", "newton-mod", "bfgs", "ncn"])
def test_every_optimizer_accepted(tmp_path, capsys, cases_file, optimizer):
    code, out, _ = run(capsys, "reconstruct", "--cases", cases_file, "--guess", 1, "--optimizer", optimizer,
                       "--iters", 3, "--mx", 2, "--mt", 2, "--out", tmp_path)
    (row,) = read_results(tmp_path / "result.csv")
    assert code == 0 and row.optimizer == optimizer and np.isfinite(row.final_loss)


def test_bad_layout_is_usage_error(tmp_path, capsys, cases_file):
    code, _, _ = run(capsys, "reconstruct", "--cases", cases_file, "--mx", 0, "--out", tmp_path)
    assert code == 1


def test_empty_sweep(tmp_path, capsys, cases_file):
    code, out, _ = run(capsys, "campaign", "--cases", cases_file, "--out", tmp_path)
    assert code == 0 and "0 trials" in out
    assert read_results(tmp_path / "results.csv") == []
    assert json.loads((tmp_path / "summary.json").read_text())["cells"] == {}


def test_epsilon_star_command(tmp_path, capsys):
    from test_harness import result
    from ksobs.harness import write_results

    rs = [result(trial_id=f"t{i:03d}", loss=10.0 ** -(4 + 5 * i / 150), cs=0.99) for i in range(150)]
    write_results(tmp_path / "r.csv", rs)
    code, out, _ = run(capsys, "epsilon-star", "--results", tmp_path / "r.csv", "--d-m", 8, "--out", tmp_path)
    rec = json.loads((tmp_path / "epsilon_star.json").read_text())
    assert code == 0 and rec["epsilon_star"] == pytest.approx(1e-3) and rec["trial_count"] == 150
    assert rec["m_tilde"] == {"16": pytest.approx(0.9)}
    code, _, _ = run(capsys, "epsilon-star", "--results", tmp_path / "r.csv", "--tau", 0.999, "--out", tmp_path)
    assert code == 0 and json.loads((tmp_path / "epsilon_star.json").read_text())["epsilon_star"] == "DNE"
