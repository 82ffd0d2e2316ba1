import numpy as np
import pytest

from circcorr import cli
from circcorr.circulant import CovarianceFactorization
from circcorr.risk import CSV_COLUMNS


def run(tmp_path, *args):
    out = tmp_path / "out.csv"
    code = cli.main([*args, "--out", str(out)])
    return code, (cli.read_csv(out) if out.exists() else None)


def test_risk_curve_round_trip(tmp_path):
    code, (header, cols, rows) = run(tmp_path, "risk-curve", "--model", "exchangeable", "--p", "2", "--gamma", "-0.25",
                                     "--n", "100", "--grid", "-6:6:241")
    assert code == cli.EXIT_OK
    assert tuple(cols) == CSV_COLUMNS
    assert len(rows) == 241
    assert any(h.startswith("invocation: circcorr risk-curve") for h in header)
    assert "exponent: c=0 a=0 t=-0.5 gamma=-0.25" in header
    values = np.array([float(r[5]) for r in rows])
    theta = np.array([float(r[4]) for r in rows])
    assert values[theta == 0.0][0] == pytest.approx(1e-4, abs=1e-16)
    assert np.allclose(values, values[::-1], atol=1e-16)


@pytest.mark.parametrize("flag,value", [("--c", "0"), ("--t", "-0.5"), ("--a", "0"), ("--gamma", "-0.25")])
def test_exponent_conventions_agree(tmp_path, flag, value):
    code, (_, _, rows) = run(tmp_path, "risk-curve", "--p", "3", flag, value, "--grid", "0:1:3")
    assert code == 0
    assert [float(r[3]) for r in rows] == [-0.25] * 3


def test_exponent_flags_mutually_exclusive(capsys):
    assert cli.main(["risk-curve", "--gamma", "-0.25", "--c", "0"]) == cli.EXIT_INVALID


def test_standard_set_output(tmp_path):
    code, (_, _, rows) = run(tmp_path, "risk-curve", "--standard-set", "--grid", "-6:6:25")
    assert code == 0
    assert {(int(r[1]), float(r[3])) for r in rows} == {(p, g) for p in (2, 3, 10) for g in (-0.5, -0.25, -0.01)}


def test_full_model_risk_curve_needs_direction(tmp_path, capsys):
    code, _ = run(tmp_path, "risk-curve", "--model", "full", "--p", "4", "--gamma", "-0.25")
    assert code == cli.EXIT_INVALID
    assert "--theta" in capsys.readouterr().err


def test_fisher_command(tmp_path):
    code, (_, cols, rows) = run(tmp_path, "fisher", "--model", "full", "--p", "4", "--theta", "0.1,0.2")
    assert code == 0
    assert cols == ["block", "i", "j", "value"]
    g = {(r[0], r[1], r[2]): float(r[3]) for r in rows}
    assert g[("g_theta", "1", "1")] == 3.0 and g[("g_theta", "1", "2")] == 1.0
    assert ("log_det_g_beta", "", "") in g


def test_verify_fisher_passes(tmp_path):
    code, (_, _, rows) = run(tmp_path, "verify-fisher", "--model", "exchangeable", "--p", "5", "--theta", "-0.3",
                             "--beta", "0.1,0.2,0.3,0.4,0.5")
    assert code == cli.EXIT_OK
    assert all(r[3] == "1" for r in rows)


def test_verify_fisher_reports_failure_with_exit_3(tmp_path):
    code, (_, _, rows) = run(tmp_path, "verify-fisher", "--p", "3", "--theta", "0.2", "--tol-rel", "1e-16")
    assert code == cli.EXIT_CHECK_FAILED


def test_check_superharmonic_exit_codes(tmp_path):
    code, (header, cols, rows) = run(tmp_path, "check-superharmonic", "--model", "full", "--p", "4", "--grid", "-2:2:5")
    assert code == cli.EXIT_OK
    assert cols == ["theta_1", "theta_2", "f_inv_laplacian_f"]
    assert len(rows) == 25
    assert any("convention: ratio" in h for h in header)
    code, _ = run(tmp_path, "check-superharmonic", "--p", "3", "--gamma", "0.1")
    assert code == cli.EXIT_CHECK_FAILED


@pytest.mark.parametrize(
    "args,flag",
    [
        (["fisher", "--model", "full", "--p", "4", "--theta", "0.1"], "--theta"),
        (["fisher", "--p", "1"], "--p"),
        (["sample", "--p", "3", "--beta", "1,2"], "--beta"),
        (["risk-curve", "--grid", "1:2"], "--grid"),
        (["risk-curve", "--gamma", "x"], "--gamma"),
        (["fisher", "--p", "3", "--theta", "300"], "--theta"),
    ],
)
def test_validation_errors_name_the_flag(args, flag, capsys):
    assert cli.main(args) == cli.EXIT_INVALID
    assert flag in capsys.readouterr().err


def test_sample_is_seeded(tmp_path):
    a = run(tmp_path, "sample", "--p", "3", "--n", "5", "--seed", "7")[1][2]
    b = run(tmp_path, "sample", "--p", "3", "--n", "5", "--seed", "7")[1][2]
    assert a == b and len(a) == 5


def test_identify_command(tmp_path):
    f = CovarianceFactorization.from_arrays([1.0, 2.0, 3.0], [4.0, 0.5, 0.5])
    path = tmp_path / "sigma.csv"
    np.savetxt(path, f.sigma(), delimiter=",")
    code, (_, _, rows) = run(tmp_path, "identify", "--sigma", str(path), "--model", "exchangeable")
    assert code == 0
    vals = {(r[0], int(r[1])): float(r[2]) for r in rows}
    assert vals[("alpha", 2)] == pytest.approx(2.0)
    assert vals[("theta", 1)] == pytest.approx(-np.log(2.0))


def test_identify_rejects_bad_matrix(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2\n2 1\n")
    assert cli.main(["identify", "--sigma", str(path)]) == cli.EXIT_INVALID


def test_simulate_with_config_and_append(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("p = 2\nreps = 2\nchain_length = 500\nburn_in = 200\nkl_eval_draws = 50\nworkers = 1\n")
    out = tmp_path / "sim.csv"
    assert cli.main(["simulate", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    assert cli.main(["simulate", "--config", str(cfg), "--theta", "0.5", "--append", "--out", str(out)]) == 0
    header, cols, rows = cli.read_csv(out)
    assert tuple(cols) == ("prior", "c", "p", "n", "theta0", "reps", "mean_kl", "se", "accept_rate", "excluded")
    assert [r[0] for r in rows] == ["jeffreys", "uniform", "diff(jeffreys-uniform)"] * 2
    assert rows[3][4] == "0.5"
    assert any("seed=3" in h for h in header)


def test_simulate_rejects_jeffreys_only(tmp_path, capsys):
    assert cli.main(["simulate", "--p", "2", "--c", "1", "--reps", "1"]) == cli.EXIT_INVALID
