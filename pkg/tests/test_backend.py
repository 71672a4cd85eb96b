import os
import subprocess
import sys
from pathlib import Path

import pytest

from vrpg import _backend

ROOT = Path(__file__).resolve().parents[1]


def _backend_under(env_value):
    env = dict(os.environ, VRPG_PURE_PYTHON=env_value)
    res = subprocess.run([sys.executable, "-c", "import vrpg; print(vrpg.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    return res.stdout.strip()


def test_env_forces_fallback():
    assert _backend_under("1") == "python"


@pytest.mark.skipif(not _backend.has_kernels(), reason="extension not built")
def test_compiled_core_selected_by_default():
    assert _backend_under("0") == "cython"


def test_fallback_runs_cli(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[instance]\nid = s\nA = diag: 1, 1\ntheta = 1, -1\nSigma = diag: 0.01, 0.01\n"
                   "[regularizer]\nkind = orthant\n[experiment]\nn_grid = 30000\n"
                   "replications = 2\nmaster_seed = 3\n")
    outs = []
    for flag in ("1", "0"):
        out = tmp_path / flag
        env = dict(os.environ, VRPG_PURE_PYTHON=flag)
        subprocess.run([sys.executable, "-m", "vrpg.cli", "solve", "--config", str(cfg),
                        "--out", str(out), "--quiet"], check=True, env=env)
        outs.append((out / "solve_results.csv").read_text().splitlines())
    assert len(outs[0]) == len(outs[1]) == 3


@pytest.mark.skipif(not _backend.has_kernels(), reason="extension not built")
def test_bench_script_smoke(capsys):
    sys.path.insert(0, str(ROOT / "benchmarks"))
    try:
        import bench_kernels
    finally:
        sys.path.pop(0)
    assert bench_kernels.main(["--n", "30000", "--repeat", "1"]) == 0
    assert "speedup" in capsys.readouterr().out
