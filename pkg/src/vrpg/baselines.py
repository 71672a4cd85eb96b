"""Reference solvers: the deterministic composite oracle, PR-averaged
projected SGD and the constrained M-estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .prox import Regularizer

DEFAULT_TOL = 1e-10
MAX_ITER = 1_000_000


class ConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, message, residual=math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolveInfo:
    x: np.ndarray
    iterations: int
    residual: float


def prox_gradient(grad_oracle, reg: Regularizer, init, step: float,
                  tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> SolveInfo:
    """Proximal gradient with diagnostics; see :func:`solve_deterministic`."""
    if not step > 0:
        raise ValueError("step must be > 0")
    x = reg.prox(reg._check(init, "init"), step)
    for it in range(max_iter):
        x_new = reg.prox(x - step * grad_oracle(x), step)
        residual = float(np.linalg.norm(x - x_new)) / step
        if residual <= tol:
            return SolveInfo(x, it, residual)
        x = x_new
    raise ConvergenceError(
        f"proximal gradient did not reach tol={tol:g} in {max_iter} iterations "
        f"(gradient-mapping norm {residual:.3e})",
        residual,
    )


def solve_deterministic(grad_oracle, reg: Regularizer, init, step: float,
                        tol: float = DEFAULT_TOL) -> np.ndarray:
    """Minimise ``f + R`` by proximal gradient to gradient-mapping norm ``tol``.

    Parameters
    ----------
    grad_oracle : callable
        Exact gradient of a mu-strongly convex, L-smooth ``f``.
    reg : Regularizer
    init : array_like
        Starting point (mapped into ``dom R`` by one prox step).
    step : float
        Step size, at most ``1 / L``.
    tol : float
        Target norm of ``(x - prox(x - step * grad f(x))) / step`` at the
        returned point; the output is then within ``O(tol / mu)`` of the
        minimiser.
    """
    return prox_gradient(grad_oracle, reg, init, step, tol).x


@dataclass(frozen=True)
class SgdPlan:
    """Step schedule for projected SGD.

    ``schedule="constant"`` uses ``alpha_k = c``; ``"polynomial"`` uses
    ``alpha_k = c / k**omega`` with ``omega`` in (0, 1).
    """

    n_steps: int
    schedule: str = "polynomial"
    c: float = 1.0
    omega: float = 0.6
    average: bool = True
    burn_in: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if self.schedule not in ("constant", "polynomial"):
            raise ValueError(f"unknown step schedule {self.schedule!r}")
        if not self.c > 0:
            raise ValueError("step constant must be > 0")
        if self.schedule == "polynomial" and not 0 < self.omega < 1:
            raise ValueError("omega must lie in (0, 1)")
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError("burn_in must lie in [0, n_steps)")

    def step_sizes(self) -> np.ndarray:
        k = np.arange(1, self.n_steps + 1, dtype=float)
        if self.schedule == "constant":
            return np.full(self.n_steps, self.c)
        return self.c / k ** self.omega


def run_projected_sgd_pr(instance, reg: Regularizer, plan: SgdPlan, init, rng,
                         use_kernels: bool | None = None) -> dict:
    """Projected SGD followed by a Polyak-Ruppert running average.

    Returns ``{"last": x_{n+1}, "averaged": mean(x_1, ..., x_{n+1})}`` (the
    average skips the first ``plan.burn_in`` iterates when set).
    """
    if not reg.is_indicator:
        raise TypeError("projected SGD needs an indicator regularizer")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    x0 = reg.project(reg._check(init, "init"))
    zs = instance.sample(rng, plan.n_steps)
    alphas = plan.step_sizes()
    if plan.burn_in:
        head_last, _ = _backend.sgd_pr(instance, reg, zs[: plan.burn_in], x0,
                                       alphas[: plan.burn_in], use_kernels)
        last, avg = _backend.sgd_pr(instance, reg, zs[plan.burn_in:], head_last,
                                    alphas[plan.burn_in:], use_kernels)
    else:
        last, avg = _backend.sgd_pr(instance, reg, zs, x0, alphas, use_kernels)
    return {"last": last, "averaged": avg if plan.average else last}


def solve_m_estimator(instance, reg: Regularizer, samples, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Minimise ``(1/N) sum_i f(x, z_i) + R(x)``."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[0] < 1:
        raise ValueError("need at least one sample")
    grad = instance.empirical_gradient(samples)
    return solve_deterministic(grad, reg, np.zeros(instance.dim), 1.0 / instance.L, tol)
