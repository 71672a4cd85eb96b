import csv
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrpg import cli
from vrpg.config import (
    ConfigError,
    build_instance,
    build_regularizer,
    parse_config,
    serialize_config,
)
from vrpg.prox import Ball2, Halfspaces, Orthant

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """\
# minimal config
[instance]
id = small
A = diag: 1, 1, 1
theta = 1, -0.5, 0.5
Sigma = diag: 0.01, 0.01, 0.01

[regularizer]
kind = orthant

[method]
name = vrpg

[experiment]
n_grid = 30000
replications = 4
master_seed = 5
"""


def _cfg(text=MINIMAL, **replace):
    for old, new in replace.items():
        text = text.replace(old, new)
    return text


# ---- parsing ----

def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.instance_id == "small" and cfg.reg_id == "orthant"
    assert cfg.n_grid == (30000,) and cfg.replications == 4 and cfg.master_seed == 5
    assert cfg.method["log_base"] == math.e
    inst = build_instance(cfg)
    assert isinstance(build_regularizer(cfg, inst.dim), Orthant)
    assert np.allclose(inst.A, np.eye(3))


def test_radius_error_with_line():
    text = MINIMAL.replace("kind = orthant", "kind = ball2\nradius = -1")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    line = text.splitlines().index("radius = -1") + 1
    assert (line, "ball2.radius must be > 0") in exc.value.errors


@pytest.mark.parametrize("patch,fragment", [
    (("master_seed = 5", "master_seed = 5\ncolour = red"), "unknown key experiment.colour"),
    (("replications = 4", "replications = four"), "type mismatch"),
    (("replications = 4\n", ""), "missing required key experiment.replications"),
    (("[method]", "[experiment]\nreplications = 2\n[method]"), "duplicate section [experiment]"),
    (("n_grid = 30000", "n_grid = "), "n_grid must be non-empty"),
    (("n_grid = 30000", "n_grid = 3000, 1000"), "sorted ascending"),
    (("replications = 4", "replications = 0"), "replications must be >= 1"),
    (("[method]", "[solver]"), "unknown section [solver]"),
    (("kind = orthant", "kind = sphere"), "type mismatch"),
    (("theta = 1, -0.5, 0.5", "theta = 1, , 0.5"), "type mismatch"),
])
def test_errors_have_line_numbers(patch, fragment):
    text = MINIMAL.replace(*patch)
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    hits = [(ln, msg) for ln, msg in exc.value.errors if fragment in msg]
    assert hits, exc.value.errors
    assert all(ln >= 1 for ln, _ in hits)


def test_errors_collected_together():
    text = MINIMAL.replace("replications = 4", "replications = x").replace("master_seed = 5", "")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert len(exc.value.errors) == 2


def test_round_trip_all_kinds():
    text = """
[instance]
id = rt
family = random_curvature
eigenvalues = 1, 2.5
rotation_seed = 3
theta = 0.1, 0.2
Sigma = 0.02, 0.001; 0.001, 0.03
curvature_scale = 0.25
[regularizer]
kind = halfspaces
id = hs
normals = 1, 1; -1, 0.5
offsets = 1, 2
[method]
name = sgd_pr
schedule = doubling
t0 = 500
log_base = 2
sgd_c = 0.3
[experiment]
n_grid = 10, 20
replications = 3
master_seed = 18446744073709551615
output = some/dir
lemma1_mode = both
compare_doubling = true
[tolerances]
solver_tol = 1e-11
"""
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg
    inst = build_instance(cfg)
    assert isinstance(build_regularizer(cfg, inst.dim), Halfspaces)
    assert inst.mu == pytest.approx(1.0)


@given(
    theta=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=2),
    radius=st.floats(1e-6, 1e6),
    grid=st.lists(st.integers(1, 10 ** 9), min_size=1, max_size=5),
    seed=st.integers(0, 2 ** 64 - 1),
)
@settings(max_examples=100, deadline=None)
def test_round_trip_property(theta, radius, grid, seed):
    text = (f"[instance]\nid = p\nA = diag: 1, 2\ntheta = {theta[0]!r}, {theta[1]!r}\n"
            f"Sigma = diag: 0.1, 0.1\n[regularizer]\nkind = ball2\nradius = {radius!r}\n"
            f"[experiment]\nn_grid = {', '.join(map(str, sorted(grid)))}\nreplications = 1\n"
            f"master_seed = {seed}\n")
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg


def test_ball_build():
    cfg = parse_config(MINIMAL.replace("kind = orthant", "kind = ball2\nradius = 2\ncenter = 0, 1, 0"))
    reg = build_regularizer(cfg, 3)
    assert isinstance(reg, Ball2) and reg.radius == 2.0


# ---- running ----

def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_output_precedence(tmp_path, monkeypatch):
    cfg = parse_config(MINIMAL)
    monkeypatch.setenv("VRPG_BENCH_OUT", str(tmp_path / "env"))
    assert cli.resolve_output(None, cfg) == tmp_path / "env"
    assert cli.resolve_output(str(tmp_path / "flag"), cfg) == tmp_path / "flag"
    cfg.experiment["output"] = str(tmp_path / "cfg")
    assert cli.resolve_output(None, cfg) == tmp_path / "cfg"
    monkeypatch.delenv("VRPG_BENCH_OUT")
    cfg.experiment["output"] = None
    assert cli.resolve_output(None, cfg) == Path("vrpg_out")


@pytest.mark.parametrize("method", ["vrpg", "sgd_pr", "m_estimator"])
def test_solve_writes_rows(tmp_path, method):
    p = tmp_path / "c.cfg"
    p.write_text(_cfg(**{"name = vrpg": f"name = {method}"}))
    assert cli.main(["solve", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 0
    rows = _read(tmp_path / "solve_results.csv")
    assert len(rows) == 4 and all(r["error"] == "" for r in rows)
    assert [r["schema_version"] for r in rows] == ["1"] * 4
    assert [int(r["rep"]) for r in rows] == [0, 1, 2, 3]


def test_solve_row_errors_do_not_abort(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(_cfg(**{"name = vrpg": "name = sgd_pr", "kind = orthant": "kind = l1\nweight = 0.1"}))
    assert cli.main(["solve", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 1
    rows = _read(tmp_path / "solve_results.csv")
    assert len(rows) == 4 and all("TypeError" in r["error"] for r in rows)


def test_benchmark_delta_claims(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(_cfg(**{"kind = orthant": "kind = zero", "n_grid = 30000": "n_grid = 100, 1000",
                         "replications = 4": "replications = 200"}))
    assert cli.main(["benchmark-delta", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 0
    rows = _read(tmp_path / "benchmark-delta_results.csv")
    assert len(rows) == 400
    assert list(rows[0])[:8] == ["schema_version", "instance_id", "reg_id", "n", "rep", "seed",
                                 "scaled_error_sq", "solver_iters"]
    claims = _read(tmp_path / "benchmark-delta_claims.csv")
    assert [c["pass"] for c in claims] == ["true", "true"]


def test_verify_theorem_canonical_exit_zero(tmp_path, capsys):
    code = cli.main(["verify-theorem", "--config", str(ROOT / "configs" / "canonical_orthant.cfg"),
                     "--out", str(tmp_path), "--jobs", "2"])
    assert code == 0
    claims = _read(tmp_path / "verify-theorem_claims.csv")
    assert {c["claim_id"] for c in claims} == {"theorem", "doubling_vs_constant"}
    assert all(c["pass"] == "true" for c in claims)
    assert "theorem" in capsys.readouterr().out


def test_verify_lemma1_infeasible_grid_point_recorded(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(_cfg(**{"n_grid = 30000": "n_grid = 1000, 30000"}))
    assert cli.main(["verify-lemma1", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 1
    claims = _read(tmp_path / "verify-lemma1_claims.csv")
    assert claims[0]["pass"] == "false" and "precondition" in claims[0]["error"]
    assert claims[1]["pass"] == "true"


def test_verify_lipschitz_rate_claim(tmp_path):
    cfg = ROOT / "configs" / "random_curvature_lipschitz.cfg"
    assert cli.main(["verify-lipschitz", "--config", str(cfg), "--out", str(tmp_path),
                     "--quiet"]) == 0
    ids = [c["claim_id"] for c in _read(tmp_path / "verify-lipschitz_claims.csv")]
    assert ids == ["lipschitz", "lipschitz", "lipschitz_rate"]


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(MINIMAL.replace("n_grid = 30000", "n_grid = "))
    assert cli.main(["solve", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "n_grid must be non-empty" in capsys.readouterr().err


def test_seed_override_and_determinism(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(MINIMAL)
    outs = []
    for run, jobs in (("a", "1"), ("b", "2"), ("c", "1")):
        seed = "9" if run != "c" else "10"
        cli.main(["sweep", "--config", str(p), "--out", str(tmp_path / run), "--seed", seed,
                  "--jobs", jobs, "--quiet"])
        outs.append({f.name: f.read_bytes() for f in sorted((tmp_path / run).glob("*.csv"))})
    assert outs[0] == outs[1]
    assert outs[0]["solve_results.csv"] != outs[2]["solve_results.csv"]
    assert set(outs[0]) >= {"solve_results.csv", "benchmark-delta_results.csv",
                            "verify-lemma1_claims.csv", "verify-lipschitz_claims.csv",
                            "verify-theorem_claims.csv", "sweep_claims.csv"}


def test_float_format_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 123456789.123456789):
        assert float(cli.fmt(v)) == v


def test_console_script(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(MINIMAL)
    res = subprocess.run([sys.executable, "-m", "vrpg.cli", "solve", "--config", str(p),
                          "--out", str(tmp_path), "--quiet"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "solve_results.csv").exists()
