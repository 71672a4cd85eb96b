import numpy as np
import pytest

from vrpg.benchmark import (
    BENCHMARK_COLUMNS,
    check_asymptotic_limit,
    estimate_delta_sq,
    solve_tilted,
    tilt_vector,
)
from vrpg.baselines import prox_gradient
from vrpg.instances import compute_kkt, make_quadratic_instance, quadratic_from_spectrum, solve_population
from vrpg.prox import Orthant, Zero


def test_tilted_unconstrained_closed_form():
    inst = quadratic_from_spectrum([1.0, 2.0, 4.0], [1.0, 0.0, -1.0], 0.05 * np.eye(3), 3)
    zs = inst.sample(np.random.default_rng(0), 40)
    x_star = solve_population(inst, Zero(3))
    x_n = solve_tilted(inst, Zero(3), x_star, zs)
    assert np.allclose(x_n, np.linalg.solve(inst.A, zs.mean(axis=0)), atol=1e-10)


def test_tilted_noiseless_is_x_star():
    inst = make_quadratic_instance(np.eye(3), [1.0, -1.0, 0.5], np.zeros((3, 3)))
    x_star = solve_population(inst, Orthant(3))
    zs = inst.sample(np.random.default_rng(0), 10)
    assert np.allclose(solve_tilted(inst, Orthant(3), x_star, zs), x_star, atol=1e-12)


def test_tilted_orthant_grid():
    inst = make_quadratic_instance(np.array([[1.5, 0.4], [0.4, 1.0]]), [0.3, -0.2], 0.5 * np.eye(2))
    reg = Orthant(2)
    x_star = solve_population(inst, reg)
    zs = inst.sample(np.random.default_rng(1), 1)
    v = tilt_vector(inst, x_star, zs)
    x_n = solve_tilted(inst, reg, x_star, zs)
    h = 1e-3
    g = np.arange(0, 2 + h / 2, h)
    X, Y = np.meshgrid(g, g, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = 0.5 * np.einsum("ij,jk,ik->i", P, inst.A, P) - P @ inst.theta + P @ v
    assert np.max(np.abs(x_n - P[np.argmin(vals)])) <= 2 * h


def test_tilted_kkt_residual(canonical):
    reg = Orthant(5)
    x_star = solve_population(canonical, reg)
    zs = canonical.sample(np.random.default_rng(5), 100)
    v = tilt_vector(canonical, x_star, zs)
    x_n = solve_tilted(canonical, reg, x_star, zs, tol=1e-10)
    g = canonical.population_grad(x_n) + v
    assert np.linalg.norm(x_n - reg.prox(x_n - g, 1.0)) <= 1e-10


@pytest.mark.parametrize("n", [100, 1000, 10_000])
def test_delta_sq_unconstrained_constant(canonical, n):
    est = estimate_delta_sq(canonical, Zero(5), n, 300, 42)
    assert abs(est.delta_sq - 0.05) <= 3 * est.std_err
    assert est.delta_sq == pytest.approx(np.mean(est.per_rep_values))
    assert est.std_err == pytest.approx(np.std(est.per_rep_values, ddof=1) / np.sqrt(300))
    assert np.min(np.linalg.eigvalsh(est.empirical_cov)) >= -1e-10


def test_delta_sq_noiseless_zero():
    inst = make_quadratic_instance(np.eye(2), [1.0, 1.0], np.zeros((2, 2)))
    est = estimate_delta_sq(inst, Orthant(2), 50, 5, 0)
    assert est.delta_sq <= (1e-10) ** 2 * 50


def test_delta_sq_permutation_invariant(canonical):
    # reversing the sample stream of each replication leaves the estimator unchanged in law
    reg = Orthant(5)
    x_star = solve_population(canonical, reg)
    a, b = [], []
    for s in range(300):
        zs = canonical.sample(np.random.default_rng(s), 200)
        for out, block in ((a, zs), (b, zs[np.random.default_rng(10_000 + s).permutation(200)])):
            e = solve_tilted(canonical, reg, x_star, block) - x_star
            out.append(200 * e @ e)
    a, b = np.array(a), np.array(b)
    assert abs(a.mean() - b.mean()) <= 3 * np.std(a - b, ddof=1) / np.sqrt(300) + 1e-15


def test_delta_sq_seeds_and_jobs(canonical):
    e1 = estimate_delta_sq(canonical, Orthant(5), 100, 8, 3, instance_id="c")
    e2 = estimate_delta_sq(canonical, Orthant(5), 100, 8, 3, instance_id="c", jobs=2)
    assert e1.per_rep_values == e2.per_rep_values
    assert e1.seeds == e2.seeds and len(set(e1.seeds)) == 8
    with pytest.raises(ValueError):
        estimate_delta_sq(canonical, Orthant(5), 100, 1, 3)


def test_asymptotic_limit_unconstrained(canonical):
    cert = compute_kkt(canonical, Zero(5), solve_population(canonical, Zero(5)))
    rep = check_asymptotic_limit(canonical, Zero(5), cert, [100, 1000], 300, 0)
    assert rep.traces["literal"] == pytest.approx(0.05) == rep.traces["tangent_pinv"]
    for est in rep.estimates:
        assert abs(est.delta_sq - 0.05) <= 3 * est.std_err


def test_asymptotic_limit_noiseless():
    inst = make_quadratic_instance(np.eye(2), [2.0, 0.0], np.zeros((2, 2)))
    from vrpg.prox import Ball2
    reg = Ball2(np.zeros(2), 1.0)
    cert = compute_kkt(inst, reg, solve_population(inst, reg))
    rep = check_asymptotic_limit(inst, reg, cert, [10, 100], 5, 0)
    assert all(e.delta_sq <= 1e-15 for e in rep.estimates)


def test_asymptotic_limit_identifies_tangent_form(active_ball):
    inst, reg = active_ball
    cert = compute_kkt(inst, reg, solve_population(inst, reg))
    rep = check_asymptotic_limit(inst, reg, cert, [1000, 10_000], 500, 1)
    assert rep.identified == "tangent_pinv"
    assert rep.normal_variance_ok


def test_csv_columns_declared():
    assert BENCHMARK_COLUMNS == ("instance_id", "reg_id", "n", "rep", "seed", "scaled_error_sq",
                                 "solver_iters")
