import os
import subprocess
import sys

import numpy as np
import pytest

from regionmg.cli import main


def read_history(path):
    lines = open(path).read().splitlines()
    assert lines[0] == "iter,rel_residual"
    return [float(l.split(",")[1]) for l in lines[1:]]


SMALL = ["--n", "28", "--regions", "3x3", "--levels", "3"]


def test_solve_writes_history(tmp_path, capsys):
    rc = main(["solve", *SMALL, "--omega", "0.6", "--tol", "1e-8", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    hist = read_history(tmp_path / "history.csv")
    assert hist[0] == 1.0 and hist[-1] < 1e-8
    assert f"iterations {len(hist) - 1}" in out
    assert "setup time" in out and "solve time" in out
    row = open(tmp_path / "history.csv").read().splitlines()[2]
    mantissa = row.split(",")[1].split("e")[0]
    assert len(mantissa.replace(".", "").lstrip("-")) == 9


def test_solve_3d(tmp_path):
    rc = main(["solve", "--dim", "3", "--n", "10", "--regions", "3x3x3", "--levels", "2",
               "--tol", "1e-8", "--out", str(tmp_path)])
    assert rc == 0


@pytest.mark.parametrize("argv", [
    ["solve", "--levels", "1"],
    ["solve", "--n", "10x10x10"],
    ["solve", "--regions", "3x3x3"],
    ["solve", "--smoother", "sor"],
    ["solve", "--workers", "0"],
    ["solve", "--n", "10", "--regions", "20x1"],
    ["solve", "--n", "4", "--regions", "1x1", "--levels", "5"],
    ["hybrid", "--n", "10", "--scenarios", "nope"],
    ["bench", "--sizes", "axb"],
    ["frobnicate"],
])
def test_configuration_errors_exit_2(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)] if argv[0] != "frobnicate" else argv) == 2


def test_chebyshev_degree_2_runs(tmp_path, capsys):
    rc = main(["solve", *SMALL, "--smoother", "chebyshev", "--degree", "2", "--tol", "1e-8",
               "--out", str(tmp_path)])
    assert rc == 0
    assert read_history(tmp_path / "history.csv")[-1] < 1e-8


def test_divergence_and_non_convergence_exit_1(tmp_path):
    assert main(["solve", *SMALL, "--omega", "3.0", "--out", str(tmp_path)]) == 1
    assert main(["solve", *SMALL, "--max-iters", "2", "--out", str(tmp_path)]) == 1


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nn = 28\nregions = 3x3\nomega = 0.6\ntol = 1e-6\nmax-iters = 3\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert len(read_history(tmp_path / "history.csv")) == 4
    assert main(["solve", "--config", str(cfg), "--max-iters", "100", "--out",
                 str(tmp_path)]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    assert main(["solve", "--config", str(bad)]) == 2


@pytest.mark.parametrize("smoother", ["jacobi", "gauss_seidel", "chebyshev"])
def test_equivalence_single_region_exact(tmp_path, capsys, smoother):
    rc = main(["equivalence", "--n", "28", "--regions", "1x1", "--smoother", smoother,
               "--threshold", "1e-10", "--tol", "1e-10", "--out", str(tmp_path)])
    assert rc == 0
    assert "PASS" in capsys.readouterr().out
    for name in ("region_history.csv", "composite_history.csv", "diff.csv"):
        assert (tmp_path / name).exists()


def test_equivalence_jacobi_small(tmp_path, capsys):
    assert main(["equivalence", *SMALL, "--omega", "0.6", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_equivalence_gs_within_band(tmp_path, capsys):
    rc = main(["equivalence", "--n", "82", "--regions", "3x3", "--smoother", "gauss_seidel",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = open(tmp_path / "diff.csv").read().splitlines()[1:10]
    assert max(float(l.split(",")[3]) for l in lines) <= 5e-2


def test_equivalence_uneven_is_report_only(tmp_path, capsys):
    rc = main(["equivalence", "--n", "81x84", "--regions", "3x3", "--omega", "0.6",
               "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "report only" in out and "PASS" not in out


def test_equivalence_threshold_failure(tmp_path):
    rc = main(["equivalence", *SMALL, "--smoother", "gauss_seidel", "--threshold", "1e-14",
               "--out", str(tmp_path)])
    assert rc == 1


def test_bench_small_sizes(tmp_path, capsys):
    rc = main(["bench", "--sizes", "2x2,5x4,14x9", "--reps", "1", "--out", str(tmp_path)])
    assert rc == 0
    lines = open(tmp_path / "bench.csv").read().splitlines()
    assert lines[0].startswith("coarse_nx,coarse_ny,fine_nx,fine_ny,generic_s,structured_s,ratio")
    assert len(lines) == 4
    assert all(float(l.split(",")[-1]) <= 1e-13 for l in lines[1:])


def test_hybrid_small_cube(tmp_path, capsys):
    rc = main(["hybrid", "--n", "10", "--levels", "2", "--scenarios", "none,region-13,corners",
               "--out", str(tmp_path)])
    assert rc == 0
    rows = open(tmp_path / "hybrid.csv").read().splitlines()
    assert rows[0] == "scenario,iterations"
    its = dict(r.split(",") for r in rows[1:])
    assert set(its) == {"none", "region-13", "corners"}
    assert all(v != "inf" for v in its.values())
    # the "none" scenario is the plain solve with the same flags
    rc = main(["solve", "--dim", "3", "--n", "10", "--regions", "3x3x3", "--levels", "2",
               "--smoother", "symmetric_gs", "--sweeps", "2", "--cycle", "w", "--tol", "1e-6",
               "--transfer", "constant", "--out", str(tmp_path)])
    assert rc == 0
    assert len(read_history(tmp_path / "history.csv")) - 1 == int(its["none"])


def test_hybrid_failure_recorded_as_inf(tmp_path):
    rc = main(["hybrid", "--n", "10", "--levels", "2", "--scenarios", "none", "--max-iters", "1",
               "--out", str(tmp_path)])
    assert rc == 1
    assert open(tmp_path / "hybrid.csv").read().splitlines()[1] == "none,inf"


def test_repeated_runs_are_byte_identical(tmp_path):
    outs = []
    for k, workers in enumerate(("1", "1", "3")):
        d = tmp_path / str(k)
        assert main(["solve", *SMALL, "--smoother", "gauss_seidel", "--tol", "1e-8",
                     "--workers", workers, "--out", str(d)]) == 0
        outs.append((d / "history.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_numpy_fallback_matches(tmp_path):
    histories = []
    for flag in ("0", "1"):
        d = tmp_path / flag
        env = dict(os.environ, REGIONMG_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-m", "regionmg", "solve", *SMALL,
                               "--smoother", "symmetric_gs", "--tol", "1e-8", "--out", str(d)],
                              env=env, capture_output=True, text=True, timeout=300)
        assert proc.returncode == 0, proc.stderr
        histories.append(read_history(d / "history.csv"))
    a, b = np.array(histories[0]), np.array(histories[1])
    assert a.shape == b.shape
    np.testing.assert_allclose(a, b, rtol=1e-8)
