"""Synthetic stochastic problem instances and KKT analytics.

Noise samples are rows of a 2-d array; ``instance.sample(rng, n)`` returns
``n`` of them and ``grad_batch(x, zs)`` the matching per-sample gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .baselines import DEFAULT_TOL, prox_gradient
from .prox import ConstraintSet, Regularizer, Zero
from ._util import stable_mean

__all__ = [
    "ProblemInstance",
    "QuadraticGaussianInstance",
    "RandomCurvatureInstance",
    "KktCertificate",
    "KktError",
    "make_quadratic_instance",
    "quadratic_from_spectrum",
    "canonical_instance",
    "solve_population",
    "compute_kkt",
    "estimate_sigma_star",
    "validate_assumptions",
]

CANONICAL_THETA = (1.0, -0.5, 0.5, -1.0, 0.25)


class KktError(ValueError):
    """KKT analytics could not certify the supplied point."""


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _check_spd(A, name="A"):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    scale = max(1.0, float(np.abs(A).max()))
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * scale):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (A + A.T)


class ProblemInstance:
    """A stochastic objective ``f(x) = E_z f(x, z)``.

    Subclasses provide ``sample``, ``grad_batch``, ``population_grad``,
    ``population_hessian`` and ``empirical_gradient``; ``mu`` and ``L`` are
    the declared strong-convexity and smoothness constants.
    """

    dim: int
    mu: float
    L: float

    def grad(self, x, z) -> np.ndarray:
        return self.grad_batch(x, np.asarray(z)[None, :])[0]

    def population_value(self, x) -> float:
        raise NotImplementedError

    def sigma_star(self, x) -> np.ndarray | None:
        """Analytic covariance of ``grad f(x, z)``, or None if unknown."""
        return None

    def describe(self) -> dict:
        return {"family": type(self).__name__}


class QuadraticGaussianInstance(ProblemInstance):
    """``f(x, z) = 0.5 x^T A x - z^T x`` with ``z ~ N(theta, Sigma)``.

    ``noise="uniform"`` swaps the Gaussian for a bounded uniform law with
    the same mean and covariance.
    """

    def __init__(self, A, theta, Sigma, noise: str = "gaussian"):
        A = _check_spd(A)
        theta = np.asarray(theta, dtype=float)
        Sigma = _check_spd(Sigma, "Sigma")
        d = A.shape[0]
        if theta.shape != (d,) or Sigma.shape != (d, d):
            raise ValueError("shape mismatch between A, theta and Sigma")
        evals = np.linalg.eigvalsh(A)
        if evals[0] <= 1e-12 * evals[-1]:
            raise ValueError("A must be positive definite")
        s_evals = np.linalg.eigvalsh(Sigma)
        if s_evals[0] < -1e-12 * max(1.0, abs(s_evals[-1])):
            raise ValueError("Sigma must be positive semidefinite")
        if noise not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise family {noise!r}")
        self.A = A
        self.theta = theta
        self.Sigma = Sigma
        self.noise = noise
        self.dim = d
        self.mu = float(evals[0])
        self.L = float(evals[-1])
        self._root = _psd_sqrt(Sigma)

    @property
    def hessian_matrix(self):
        return self.A

    def sample(self, rng, size: int) -> np.ndarray:
        if self.noise == "gaussian":
            u = rng.standard_normal((size, self.dim))
        else:
            u = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), (size, self.dim))
        return self.theta + u @ self._root.T

    def grad(self, x, z):
        return self.A @ x - z

    def grad_batch(self, x, zs):
        return (self.A @ x)[None, :] - zs

    def population_grad(self, x):
        return self.A @ x - self.theta

    def population_value(self, x):
        return 0.5 * x @ self.A @ x - self.theta @ x

    def population_hessian(self, x):
        return self.A

    def sigma_star(self, x):
        return self.Sigma.copy()

    def empirical_gradient(self, zs):
        zbar = stable_mean(zs)
        A = self.A
        return lambda x: A @ x - zbar

    def describe(self):
        return {"family": "quadratic", "A": self.A.tolist(), "theta": self.theta.tolist(),
                "Sigma": self.Sigma.tolist(), "noise": self.noise}


class RandomCurvatureInstance(ProblemInstance):
    """Quadratic with random curvature: ``f(x, z) = 0.5 x^T (A + s U) x - w^T x``.

    ``U`` is symmetric with independent Uniform[-1, 1] entries on and above
    the diagonal and ``w ~ N(theta, Sigma)``. Gradient noise then depends on
    ``x``. Since ``||U||_2 <= d``, every per-sample gradient is Lipschitz
    with constant ``L = lambda_max(A) + s * d``.

    A sample row holds ``w`` followed by the upper triangle of ``U``.
    """

    def __init__(self, A, theta, Sigma, curvature_scale: float):
        base = QuadraticGaussianInstance(A, theta, Sigma)
        if not curvature_scale >= 0:
            raise ValueError("curvature_scale must be >= 0")
        self.A, self.theta, self.Sigma = base.A, base.theta, base.Sigma
        self.scale = float(curvature_scale)
        self.dim = d = base.dim
        self.mu = base.mu
        self.L = base.L + self.scale * d
        self._root = base._root
        self._iu = np.triu_indices(d)

    def _unpack(self, zs):
        d = self.dim
        w = zs[:, :d]
        U = np.zeros((zs.shape[0], d, d))
        U[:, self._iu[0], self._iu[1]] = zs[:, d:]
        U[:, self._iu[1], self._iu[0]] = zs[:, d:]
        return w, U

    def sample(self, rng, size):
        d = self.dim
        w = self.theta + rng.standard_normal((size, d)) @ self._root.T
        tri = rng.uniform(-1.0, 1.0, (size, len(self._iu[0])))
        return np.hstack([w, tri])

    def grad_batch(self, x, zs):
        w, U = self._unpack(np.atleast_2d(zs))
        return (self.A @ x)[None, :] + self.scale * (U @ x) - w

    def population_grad(self, x):
        return self.A @ x - self.theta

    def population_value(self, x):
        return 0.5 * x @ self.A @ x - self.theta @ x

    def population_hessian(self, x):
        return self.A

    def sigma_star(self, x):
        x = np.asarray(x, dtype=float)
        # Cov(Ux) for Var(U_ij) = 1/3
        cov_u = (x @ x * np.eye(self.dim) + np.outer(x, x) - np.diag(x * x)) / 3.0
        return self.scale ** 2 * cov_u + self.Sigma

    def empirical_gradient(self, zs):
        w, U = self._unpack(np.atleast_2d(zs))
        wbar = stable_mean(w)
        H = self.A + self.scale * U.mean(axis=0)
        return lambda x: H @ x - wbar

    def describe(self):
        return {"family": "random_curvature", "A": self.A.tolist(), "theta": self.theta.tolist(),
                "Sigma": self.Sigma.tolist(), "curvature_scale": self.scale}


def make_quadratic_instance(A, theta, Sigma, noise: str = "gaussian") -> QuadraticGaussianInstance:
    """Build ``f(x, z) = 0.5 x^T A x - z^T x`` with ``mu``, ``L`` from the spectrum of A."""
    return QuadraticGaussianInstance(A, theta, Sigma, noise=noise)


def quadratic_from_spectrum(eigenvalues, theta, Sigma, rotation_seed=None, noise="gaussian"):
    """Quadratic instance with ``A = Q diag(eigenvalues) Q^T``.

    ``Q`` is a Haar-random orthogonal matrix drawn from ``rotation_seed``;
    without a seed ``A`` is diagonal.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if rotation_seed is None:
        A = np.diag(lam)
    else:
        Q = random_rotation(lam.shape[0], rotation_seed)
        A = (Q * lam) @ Q.T
    return QuadraticGaussianInstance(A, theta, Sigma, noise=noise)


def random_rotation(d: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def canonical_instance(sigma: float = 0.1, dim: int = 5) -> QuadraticGaussianInstance:
    """``A = I``, ``Sigma = sigma^2 I`` with a fixed theta that activates
    orthant and unit-ball constraints."""
    theta = np.resize(np.array(CANONICAL_THETA), dim)
    return QuadraticGaussianInstance(np.eye(dim), theta, sigma ** 2 * np.eye(dim))


def solve_population(instance, reg: Regularizer, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Population minimiser of ``f + R`` by proximal gradient with step ``1/L``."""
    if not tol > 0:
        raise ValueError("tol must be > 0")
    return prox_gradient(instance.population_grad, reg, np.zeros(instance.dim),
                         1.0 / instance.L, tol).x


@dataclass
class KktCertificate:
    """KKT data at the population optimum.

    ``limit_cov_literal`` is ``P H P Sigma P H P``; ``limit_cov_pinv`` is
    ``P (P H P)^+ P Sigma P (P H P)^+ P``. ``limit_cov`` is the latter,
    which reduces to ``A^{-1} Sigma A^{-1}`` without active constraints.
    """

    x_star: np.ndarray
    beta_star: np.ndarray
    active_set: list
    P_T: np.ndarray
    H_star: np.ndarray
    Sigma_star: np.ndarray
    limit_cov_literal: np.ndarray
    limit_cov_pinv: np.ndarray
    stationarity_residual: float
    constraint_values: np.ndarray = field(repr=False, default=None)

    @property
    def limit_cov(self) -> np.ndarray:
        return self.limit_cov_pinv

    @property
    def limit_trace(self) -> float:
        return float(np.trace(self.limit_cov))

    @property
    def candidates(self) -> dict:
        return {"literal": self.limit_cov_literal, "tangent_pinv": self.limit_cov_pinv}


def tangent_projector(active_grads: np.ndarray, dim: int, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthogonal projector onto the null space of the rows of ``active_grads``."""
    if active_grads.shape[0] == 0:
        return np.eye(dim)
    _, s, Vt = np.linalg.svd(active_grads)
    rank = int(np.sum(s > rank_tol * max(1.0, s[0])))
    N = Vt[rank:].T
    P = N @ N.T
    return 0.5 * (P + P.T)


def compute_kkt(instance, reg: Regularizer, x_star, active_tol: float = 1e-7,
                sigma_star=None, stationarity_tol: float = 1e-8,
                nnls_tol: float = 1e-6) -> KktCertificate:
    """KKT certificate (multipliers, tangent projector, limit covariance).

    Multipliers are recovered by nonnegative least squares on the
    stationarity equation restricted to the active constraints; a residual
    above ``nnls_tol`` is reported as degenerate rather than guessed.
    """
    if not isinstance(reg, (ConstraintSet, Zero)):
        raise TypeError("compute_kkt needs an indicator regularizer (or Zero)")
    x = reg._check(x_star, "x_star")
    if isinstance(reg, ConstraintSet) and not reg.contains(x, tol=active_tol):
        raise KktError("x_star is infeasible")
    g, G, Hg = reg.constraint_functions(x)
    active = np.flatnonzero(np.abs(g) <= active_tol)
    grad = instance.population_grad(x)
    beta = np.zeros(g.shape[0])
    if active.size:
        b_act, resid = nnls(G[active].T, -grad)
        beta[active] = b_act
    else:
        resid = float(np.linalg.norm(grad))
    if resid > nnls_tol:
        raise KktError(
            f"multiplier recovery failed: NNLS residual {resid:.3e} > {nnls_tol:g} "
            "(degenerate active set or x_star not optimal)"
        )
    stat = float(np.linalg.norm(grad + G.T @ beta)) if g.size else float(np.linalg.norm(grad))
    if stat > stationarity_tol:
        raise KktError(f"x_star fails stationarity: residual {stat:.3e} > {stationarity_tol:g}")
    H = instance.population_hessian(x) + np.einsum("i,ijk->jk", beta, Hg) if g.size \
        else np.array(instance.population_hessian(x), dtype=float)
    H = 0.5 * (H + H.T)
    P = tangent_projector(G[active], instance.dim)
    if sigma_star is None:
        sigma_star = instance.sigma_star(x)
        if sigma_star is None:
            raise ValueError("instance has no analytic Sigma*; pass sigma_star")
    S = np.asarray(sigma_star, dtype=float)
    PHP = P @ H @ P
    literal = PHP @ S @ PHP
    B = P @ np.linalg.pinv(PHP, rcond=1e-10, hermitian=True) @ P
    pinv = B @ S @ B
    return KktCertificate(
        x_star=x.copy(),
        beta_star=beta,
        active_set=active.tolist(),
        P_T=P,
        H_star=H,
        Sigma_star=S,
        limit_cov_literal=0.5 * (literal + literal.T),
        limit_cov_pinv=0.5 * (pinv + pinv.T),
        stationarity_residual=stat,
        constraint_values=g,
    )


def estimate_sigma_star(instance, x_star, samples: int, rng) -> np.ndarray:
    """Unbiased sample covariance of ``grad f(x_star, z)`` over fresh draws."""
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    grads = instance.grad_batch(np.asarray(x_star, dtype=float), instance.sample(rng, samples))
    return np.atleast_2d(np.cov(grads, rowvar=False, ddof=1))


@dataclass
class CheckResult:
    passed: bool
    worst_slack: float


@dataclass
class AssumptionReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


def validate_assumptions(instance, trials: int, rng, scale: float = 1.0,
                         tol: float = 1e-12) -> AssumptionReport:
    """Randomised checks of strong convexity/smoothness, per-sample
    Lipschitz gradients and gradient unbiasedness.

    Slacks of the deterministic checks are normalised by ``||x - y||^2``;
    the unbiasedness slack is ``3 * se - |mean error|`` in the worst
    coordinate.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    d, mu, L = instance.dim, instance.mu, instance.L
    worst_sc = worst_sm = worst_lip = math.inf
    zs = instance.sample(rng, trials)
    for t in range(trials):
        x = scale * rng.standard_normal(d)
        y = scale * rng.standard_normal(d)
        diff = x - y
        nrm2 = diff @ diff
        dg = instance.population_grad(x) - instance.population_grad(y)
        inner = dg @ diff
        worst_sc = min(worst_sc, (inner - mu * nrm2) / nrm2)
        worst_sm = min(worst_sm, (L * nrm2 - inner) / nrm2,
                       (L * math.sqrt(nrm2) - np.linalg.norm(dg)) / math.sqrt(nrm2))
        dz = instance.grad(x, zs[t]) - instance.grad(y, zs[t])
        worst_lip = min(worst_lip, (L * math.sqrt(nrm2) - np.linalg.norm(dz)) / math.sqrt(nrm2))
    x0 = scale * rng.standard_normal(d)
    err = instance.grad_batch(x0, instance.sample(rng, trials)) - instance.population_grad(x0)
    mean = err.mean(axis=0)
    se = err.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(d)
    unbiased_slack = float(np.min(3.0 * se - np.abs(mean)))
    if np.all(se == 0):
        unbiased_slack = float(-np.max(np.abs(mean)))
    return AssumptionReport({
        "strong_convexity": CheckResult(worst_sc >= -tol, float(worst_sc)),
        "smoothness": CheckResult(worst_sm >= -tol, float(worst_sm)),
        "sample_lipschitz": CheckResult(worst_lip >= -tol, float(worst_lip)),
        "unbiasedness": CheckResult(unbiased_slack >= -tol, unbiased_slack),
    })
