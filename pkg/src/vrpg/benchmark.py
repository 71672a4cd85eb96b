"""Monte Carlo estimation of the instance-dependent benchmark
``delta^2(N) = N * E||x_N* - x*||^2`` and of its asymptotic covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._util import base_seed, map_replications, mean_se, substream
from .baselines import DEFAULT_TOL, prox_gradient
from .instances import solve_population

__all__ = [
    "BenchmarkEstimate",
    "AsymptoticReport",
    "tilt_vector",
    "solve_tilted",
    "estimate_delta_sq",
    "check_asymptotic_limit",
]

BENCHMARK_COLUMNS = ("instance_id", "reg_id", "n", "rep", "seed", "scaled_error_sq", "solver_iters")


def tilt_vector(instance, point, samples) -> np.ndarray:
    """Empirical minus population gradient at ``point``."""
    point = np.asarray(point, dtype=float)
    gbar = _backend.column_mean(instance.grad_batch(point, samples))
    return gbar - instance.population_grad(point)


def _solve_tilt(instance, reg, v, init, tol):
    grad = instance.population_grad
    return prox_gradient(lambda x: grad(x) + v, reg, init, 1.0 / instance.L, tol)


def solve_tilted(instance, reg, x_star, samples, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Minimiser of ``f(x) + <x, v> + R(x)`` with ``v`` the tilt at ``x_star``.

    The perturbation is linear and fixed once the samples are drawn, so the
    problem is solved deterministically with the population gradient.
    """
    v = tilt_vector(instance, x_star, np.atleast_2d(samples))
    return _solve_tilt(instance, reg, v, x_star, tol).x


@dataclass
class BenchmarkEstimate:
    n: int
    delta_sq: float
    std_err: float
    replications: int
    per_rep_values: list
    empirical_cov: np.ndarray
    cov_std_err: np.ndarray = field(repr=False, default=None)
    scaled_errors: np.ndarray = field(repr=False, default=None)
    seeds: list = field(repr=False, default_factory=list)
    solver_iters: list = field(repr=False, default_factory=list)


def _delta_rep(instance, reg, x_star, n, seed, tol):
    rng = np.random.default_rng(seed)
    samples = instance.sample(rng, n)
    info = _solve_tilt(instance, reg, tilt_vector(instance, x_star, samples), x_star, tol)
    return math.sqrt(n) * (info.x - x_star), info.iterations


def estimate_delta_sq(instance, reg, n: int, replications: int, rng=0,
                      tol: float = DEFAULT_TOL, x_star=None, instance_id: str = "instance",
                      jobs: int = 1) -> BenchmarkEstimate:
    """Estimate ``delta^2(n)`` from independent replications.

    Replication ``r`` draws its ``n`` samples from the substream
    ``hash64(seed, instance_id, n, r)``.
    """
    if replications < 2:
        raise ValueError("need at least two replications")
    if x_star is None:
        x_star = solve_population(instance, reg, tol)
    x_star = np.asarray(x_star, dtype=float)
    seed = base_seed(rng)
    seeds = [substream(seed, instance_id, n, r) for r in range(replications)]
    out = map_replications(_delta_rep, [(instance, reg, x_star, n, s, tol) for s in seeds], jobs)
    Y = np.array([o[0] for o in out])
    vals = np.einsum("ij,ij->i", Y, Y)
    mean, se = mean_se(vals)
    cov = np.atleast_2d(np.cov(Y, rowvar=False, ddof=1))
    Yc = Y - Y.mean(axis=0)
    prods = Yc[:, :, None] * Yc[:, None, :]
    cov_se = prods.std(axis=0, ddof=1) / math.sqrt(replications)
    return BenchmarkEstimate(
        n=n, delta_sq=mean, std_err=se, replications=replications,
        per_rep_values=vals.tolist(), empirical_cov=0.5 * (cov + cov.T), cov_std_err=cov_se,
        scaled_errors=Y, seeds=seeds, solver_iters=[o[1] for o in out],
    )


@dataclass
class AsymptoticReport:
    """Convergence of ``delta^2(n)`` towards the candidate limit traces.

    ``ratios[name][i]`` is ``delta^2(n_i) / trace(candidate)``;
    ``consistent[name]`` holds when ``|delta^2 - trace| <= 3 se`` at the
    largest ``n``. ``normal_variance`` is the empirical variance of the
    scaled error in the normal space ``I - P_T`` at the largest ``n``.
    """

    n_grid: list
    estimates: list
    traces: dict
    ratios: dict
    consistent: dict
    normal_variance: float
    normal_variance_ok: bool
    cov_distance: dict

    @property
    def identified(self) -> str | None:
        hits = [k for k, ok in self.consistent.items() if ok]
        return hits[0] if len(hits) == 1 else None


def check_asymptotic_limit(instance, reg, cert, n_grid, replications: int, rng=0,
                           tol: float = DEFAULT_TOL, instance_id: str = "instance",
                           jobs: int = 1) -> AsymptoticReport:
    """Compare ``delta^2(n)`` on ``n_grid`` with both candidate limit covariances."""
    n_grid = sorted(int(n) for n in n_grid)
    seed = base_seed(rng)
    ests = [estimate_delta_sq(instance, reg, n, replications, seed, tol, cert.x_star,
                              instance_id, jobs) for n in n_grid]
    traces = {k: float(np.trace(C)) for k, C in cert.candidates.items()}
    ratios = {k: [e.delta_sq / t if t > 0 else (math.nan if e.delta_sq else 1.0) for e in ests]
              for k, t in traces.items()}
    last = ests[-1]
    consistent = {k: abs(last.delta_sq - t) <= 3.0 * last.std_err for k, t in traces.items()}
    Pn = np.eye(instance.dim) - cert.P_T
    normal_var = float(np.trace(Pn @ last.empirical_cov @ Pn))
    se_f = float(np.sqrt(np.sum(last.cov_std_err ** 2)))
    cov_distance = {k: (float(np.linalg.norm(last.empirical_cov - C)), se_f)
                    for k, C in cert.candidates.items()}
    return AsymptoticReport(
        n_grid=n_grid, estimates=ests, traces=traces, ratios=ratios, consistent=consistent,
        normal_variance=normal_var, normal_variance_ok=abs(normal_var) <= 3.0 * last.std_err,
        cov_distance=cov_distance,
    )
