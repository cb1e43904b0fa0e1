"""End-to-end tests of the command-line front end.

Each test runs ``main(argv)`` in process against a small configuration and
inspects exit codes plus written artifacts; one subprocess test covers the
``python -m`` entry point.  Exit-code contract: 0 success, 2 configuration
error, 3 numerical failure.
"""

import subprocess
import sys

import numpy as np
import pytest

from filmcav.cli import MIDLINE_HEADER, SWEEP_HEADER, main, midline_profile
from filmcav.config import parse_config
from filmcav.grid import CSV_HEADER, Grid
from filmcav.stability import critical_speed


def _write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


def _load_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_transient_writes_documented_artifacts(tmp_path):
    cfg = _write(tmp_path, "ecc = 0.2\nn1 = 8\nn2 = 4\nn_steps = 4000\n")
    out = tmp_path / "out"
    assert main(["transient", "--config", cfg, "--out", str(out)]) == 0

    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "converged = true" in summary
    assert "steps = 183" in summary

    fields = (out / "fields_final.csv").read_text(encoding="utf-8")
    assert fields.splitlines()[0] == CSV_HEADER
    assert len(fields.splitlines()) == 1 + 8 * 4

    midline = (out / "midline.csv").read_text(encoding="utf-8")
    assert midline.splitlines()[0] == MIDLINE_HEADER
    assert len(midline.splitlines()) == 1 + 8

    history = _load_csv(out / "history.csv")
    assert history.shape[1] == 6
    # Time column is strictly increasing and ends at steps * dt.
    assert np.all(np.diff(history[:, 0]) > 0.0)
    assert history[-1, 0] == pytest.approx(183 * 3e-4)

    manifest = (out / "MANIFEST.txt").read_text(encoding="utf-8")
    for name in ("fields_final.csv", "midline.csv", "history.csv",
                 "summary.txt"):
        assert name in manifest


def test_transient_snapshots_and_early_stop(tmp_path):
    cfg = _write(tmp_path, "ecc = 0.2\nn1 = 8\nn2 = 4\nn_steps = 3\n"
                           "stationarity_tol = 1e9\nsnapshot_every = 1\n")
    out = tmp_path / "out"
    assert main(["transient", "--config", cfg, "--out", str(out)]) == 0
    snap = (out / "snapshot_1.csv").read_text(encoding="utf-8")
    assert snap.splitlines()[0] == CSV_HEADER
    assert "snapshot_<step>.csv" in (out / "MANIFEST.txt").read_text()


def test_transient_nonconvergence_is_exit_3(tmp_path):
    # Strong eccentricity on the coarse grid keeps wandering within the
    # step budget; the run must flag that rather than claim success.
    cfg = _write(tmp_path, "ecc = 0.6\nn1 = 8\nn2 = 4\nn_steps = 300\n")
    out = tmp_path / "out"
    assert main(["transient", "--config", cfg, "--out", str(out)]) == 3
    assert "converged = false" in (out / "summary.txt").read_text()


def test_transient_rest_state_is_exact(tmp_path):
    # Parallel gap without sliding: the initial uniform state is already
    # stationary, pressures vanish identically.
    cfg = _write(tmp_path, "ecc = 0.0\nomega = 0.0\nn1 = 8\nn2 = 4\n"
                           "n_steps = 10\n")
    out = tmp_path / "out"
    assert main(["transient", "--config", cfg, "--out", str(out)]) == 0
    rows = _load_csv(out / "fields_final.csv")
    assert np.ptp(rows[:, 2]) == 0.0
    assert np.max(np.abs(rows[:, 3])) == 0.0
    assert "steps = 1" in (out / "summary.txt").read_text()


def test_stationary_writes_artifacts(tmp_path):
    cfg = _write(tmp_path, "ecc = 0.2\nn1 = 16\nn2 = 8\n")
    out = tmp_path / "out"
    assert main(["stationary", "--config", cfg, "--out", str(out)]) == 0
    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "converged = true" in summary
    assert "final_relative_residual" in summary
    for name in ("fields_final.csv", "midline.csv", "MANIFEST.txt"):
        assert (out / name).exists()


def test_stationary_supercritical_is_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, "ecc = 0.55\nn1 = 16\nn2 = 8\n")
    rc = main(["stationary", "--config", cfg, "--out", str(tmp_path / "out")])
    assert rc == 3
    assert "numerical failure" in capsys.readouterr().err


def test_stability_trivial_branch_both_stable(tmp_path, capsys):
    cfg = _write(tmp_path, "ecc = 0.0\nomega = 0.0\nn1 = 8\nn2 = 8\n"
                           "bc_x1 = dirichlet-zero\nstep_mode = inertial\n")
    out = tmp_path / "out"
    assert main(["stability", "--config", cfg, "--out", str(out)]) == 0
    summary = (out / "stability_summary.txt").read_text(encoding="utf-8")
    assert "operator L_G: verdict = stable" in summary
    assert "operator L_F: verdict = stable" in summary
    for name in ("fields_stationary.csv", "spectrum_LG.csv",
                 "spectrum_LF.csv", "hurwitz.txt", "MANIFEST.txt"):
        assert (out / name).exists()
    assert (out / "spectrum_LG.csv").read_text().splitlines()[0] == "re,im"
    hurwitz = (out / "hurwitz.txt").read_text(encoding="utf-8")
    assert "critical speed" in hurwitz
    assert "sign changes" in hurwitz
    assert "verdict = stable" in capsys.readouterr().out


def test_stability_without_inertia_skips_the_inertial_spectrum(tmp_path):
    cfg = _write(tmp_path, "ecc = 0.0\nomega = 0.0\nn1 = 8\nn2 = 8\n")
    out = tmp_path / "out"
    assert main(["stability", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "spectrum_LG.csv").exists()
    assert not (out / "spectrum_LF.csv").exists()
    summary = (out / "stability_summary.txt").read_text(encoding="utf-8")
    assert "L_F" not in summary


# Gentle parameters with J_r = 1/(2 pi); the periodic direction then has
# unit length, so the modal threshold analysis applies verbatim to the
# dense operators assembled on the computational domain.
_GENTLE = (
    "rho_l = 1000.0\nmu_l = 1.0\nrho_g = 900.0\nmu_g = 0.01\n"
    "kappa_s = 0.0\nk_poly = 1.4\nsigma = 1.0\nP0 = 1000.0\np_bnd = 980.0\n"
    "R0 = 0.1\nalpha0 = 0.1\nJ_r = {jr!r}\nB = 1.0\nh0 = 0.03125\n"
    "ecc = 0.0\nomega = {omega!r}\n"
    "n1 = 16\nn2 = 16\nbc_x1 = dirichlet-zero\nstep_mode = inertial\n")


@pytest.mark.parametrize("factor,f_verdict", [(0.9, "stable"),
                                              (1.1, "unstable")])
def test_stability_verdict_flips_across_critical_speed(tmp_path, factor,
                                                       f_verdict):
    jr = 1.0 / (2.0 * np.pi)
    params = parse_config(_GENTLE.format(jr=jr, omega=0.0)).params
    u_crit, _ = critical_speed(params)
    cfg = _write(tmp_path, _GENTLE.format(jr=jr, omega=factor * u_crit / jr))
    out = tmp_path / "out"
    assert main(["stability", "--config", cfg, "--out", str(out)]) == 0
    summary = (out / "stability_summary.txt").read_text(encoding="utf-8")
    assert f"operator L_F: verdict = {f_verdict}" in summary
    # The quasi-static hierarchy stays stable on both sides.
    assert "operator L_G: verdict = stable" in summary


def test_stability_unconverged_branch_is_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, "ecc = 0.4\nn1 = 16\nn2 = 8\nnewton_max = 1\n"
                           "continuation_steps = 1\n")
    rc = main(["stability", "--config", cfg, "--out", str(tmp_path / "out")])
    assert rc == 3
    assert "stationary solve failed" in capsys.readouterr().err


def test_sweep_aggregates_and_records_failures(tmp_path, capsys):
    cfg = _write(tmp_path, "n1 = 12\nn2 = 6\nsweep_axis = ecc\n"
                           "sweep_values = 0.1,0.2,0.55\n"
                           "sweep_solver = stationary\n")
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0

    lines = (out / "sweep.csv").read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == SWEEP_HEADER
    assert len(lines) == 4
    rows = [line.split(",") for line in lines[1:]]
    assert [r[1] for r in rows] == ["true", "true", "false"]
    # Bubble growth strengthens with eccentricity; the failed point is
    # recorded as NaN and the sweep carries on.
    assert float(rows[1][2]) > float(rows[0][2]) > 1.0
    assert rows[2][2] == "nan"
    for value in ("0.1", "0.2", "0.55"):
        assert (out / f"sweep_ecc_{value}" / "summary.txt").exists()
    assert (out / "sweep_ecc_0.1" / "fields_final.csv").exists()
    assert "sweep.csv" in (out / "MANIFEST.txt").read_text()
    assert "0.55,false,nan" in capsys.readouterr().out


def test_sweep_workers_do_not_change_results(tmp_path):
    text = ("n1 = 12\nn2 = 6\nsweep_axis = ecc\nsweep_values = 0.1,0.2\n"
            "sweep_solver = stationary\n")
    cfg = _write(tmp_path, text)
    assert main(["sweep", "--config", cfg, "--out",
                 str(tmp_path / "serial")]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "pooled"),
                 "--workers", "2"]) == 0
    serial = (tmp_path / "serial" / "sweep.csv").read_bytes()
    pooled = (tmp_path / "pooled" / "sweep.csv").read_bytes()
    assert serial == pooled


def test_identical_configs_give_bitwise_identical_outputs(tmp_path):
    cfg = _write(tmp_path, "ecc = 0.3\nn1 = 8\nn2 = 4\nn_steps = 40\n"
                           "stationarity_tol = 1e-4\n")
    outs = (tmp_path / "a", tmp_path / "b")
    for out in outs:
        main(["transient", "--config", cfg, "--out", str(out)])
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_configuration_errors_are_exit_2(tmp_path, capsys):
    rc = main(["transient", "--config", str(tmp_path / "missing.cfg")])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err

    assert main(["transient", "--config",
                 _write(tmp_path, "frobnicate = 1\n")]) == 2
    capsys.readouterr()
    assert main(["stationary", "--config",
                 _write(tmp_path, "ecc = 1.2\n")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, "ecc = 0.2\nn1 = 8\nn2 = 4\n")
    proc = subprocess.run(
        [sys.executable, "-m", "filmcav.cli", "stationary", "--config", cfg,
         "--out", str(tmp_path / "out")],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert "stationary: converged=true" in proc.stdout
    assert (tmp_path / "out" / "fields_final.csv").exists()


def test_midline_profile_even_and_odd_rows():
    even = Grid(6, 4, 1.0, 1.0)
    values = np.arange(24, dtype=float).reshape(6, 4)
    profile = midline_profile(even, values)
    assert np.array_equal(profile, 0.5 * (values[:, 1] + values[:, 2]))

    odd = Grid(6, 5, 1.0, 1.0)
    values = np.arange(30, dtype=float).reshape(6, 5)
    assert np.array_equal(midline_profile(odd, values), values[:, 2])
