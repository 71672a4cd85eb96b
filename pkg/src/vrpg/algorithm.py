"""Variance-reduced proximal gradient (VRPG).

Each epoch draws ``T_m + K`` fresh samples from a single stream: the first
``T_m`` give the anchor mean gradient, the remaining ``K`` drive ``K``
recentered proximal steps started from the anchor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .prox import Regularizer

__all__ = [
    "VrpgPlan",
    "VrpgTrace",
    "SampleStream",
    "StreamExhausted",
    "PlanWarning",
    "derive_plan",
    "recentered_gradient",
    "run_vrpg",
    "log_fn",
]

MAX_EPOCH_STEPS = 10_000_000
STEP_DENOM = 6 * 8 ** 2  # 384
PRECONDITION = 60 * 32  # 1920


class PlanWarning(UserWarning):
    pass


class StreamExhausted(RuntimeError):
    pass


def log_fn(log_base: float = math.e):
    if log_base == math.e:
        return math.log
    if not log_base > 1:
        raise ValueError("log_base must be > 1")
    return lambda v: math.log(v) / math.log(log_base)


@dataclass(frozen=True)
class VrpgPlan:
    n_total: int
    epochs: int
    recenter_size: int
    epoch_steps: int
    step: float
    schedule: str
    mu: float
    L: float
    log_base: float = math.e
    feasible: bool = True

    @property
    def recenter_sizes(self) -> tuple:
        if self.schedule == "doubling":
            return tuple(self.recenter_size * 2 ** m for m in range(self.epochs))
        return (self.recenter_size,) * self.epochs

    @property
    def samples_required(self) -> int:
        return sum(self.recenter_sizes) + self.epochs * self.epoch_steps

    def describe(self) -> dict:
        return {
            "n_total": self.n_total, "epochs": self.epochs, "recenter_size": self.recenter_size,
            "epoch_steps": self.epoch_steps, "step": self.step, "schedule": self.schedule,
            "mu": self.mu, "L": self.L, "log_base": self.log_base,
        }


def epoch_steps_for(mu: float, L: float) -> int:
    """Smallest integer K with ``(1 - mu^2/(384 L^2))^K <= 1/120``."""
    r = mu ** 2 / (STEP_DENOM * L ** 2)
    k = math.log(120.0) / -math.log1p(-r) if r < 1 else 1.0
    return max(1, math.ceil(k))


def theorem_precondition(n_total: int, mu: float, L: float, log_base: float = math.e) -> bool:
    """``N / log N >= 60 * 32 * L^2 / mu^2``."""
    return n_total / log_fn(log_base)(n_total) >= PRECONDITION * L ** 2 / mu ** 2


def derive_plan(n_total: int, mu: float, L: float, schedule: str = "constant_paper",
                log_base: float = math.e, t0: int | None = None) -> VrpgPlan:
    """Tuning parameters from the sample size and the conditioning.

    ``constant_paper``: ``M = ceil(log N)``, ``T = ceil(N / log N)``,
    ``step = mu / (384 L^2)`` and ``K`` from :func:`epoch_steps_for`.

    ``doubling``: ``T_m = t0 * 2^(m-1)`` with the same ``K`` and step; ``M``
    is the largest epoch count whose draws fit in ``N``. ``t0`` defaults to
    ``ceil(1920 L^2 / mu^2)``.
    """
    n_total = int(n_total)
    if n_total < 3:
        raise ValueError("n_total must be >= 3")
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    log = log_fn(log_base)
    K = epoch_steps_for(mu, L)
    if K > MAX_EPOCH_STEPS:
        raise ValueError(f"epoch length K={K} exceeds cap {MAX_EPOCH_STEPS} (L/mu too large)")
    step = mu / (STEP_DENOM * L ** 2)
    feasible = theorem_precondition(n_total, mu, L, log_base)
    if schedule == "constant_paper":
        lg = log(n_total)
        if not lg > 0:
            raise ValueError("log N must be positive")
        M = math.ceil(lg)
        T = math.ceil(n_total / lg)
    elif schedule == "doubling":
        T = int(t0) if t0 is not None else math.ceil(PRECONDITION * L ** 2 / mu ** 2)
        if T < 1:
            raise ValueError("t0 must be positive")
        M, used = 0, 0
        while used + T * 2 ** M + K <= n_total:
            used += T * 2 ** M + K
            M += 1
        M = max(M, 1)
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    if not feasible:
        warnings.warn(
            f"N={n_total} violates N/log N >= {PRECONDITION} L^2/mu^2; plan kept for exploration",
            PlanWarning, stacklevel=2,
        )
    return VrpgPlan(n_total, M, T, K, step, schedule, float(mu), float(L), log_base, feasible)


def recentered_gradient(instance, anchor, anchor_mean_grad, x, z) -> np.ndarray:
    """``grad f(x, z) + (anchor_mean_grad - grad f(anchor, z))``.

    Evaluated as ``(grad f(x, z) - grad f(anchor, z)) + anchor_mean_grad`` so
    that ``x == anchor`` returns ``anchor_mean_grad`` bit for bit.
    """
    x = np.asarray(x, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    anchor_mean_grad = np.asarray(anchor_mean_grad, dtype=float)
    if not (x.shape == anchor.shape == anchor_mean_grad.shape == (instance.dim,)):
        raise ValueError("dimension mismatch")
    return (instance.grad(x, z) - instance.grad(anchor, z)) + anchor_mean_grad


class SampleStream:
    """Sequential sample source with index bookkeeping and optional budget."""

    def __init__(self, instance, rng, budget: int | None = None):
        self.instance = instance
        self.rng = rng
        self.budget = budget
        self.position = 0
        self.windows = []

    def take(self, count: int) -> np.ndarray:
        if self.budget is not None and self.position + count > self.budget:
            raise StreamExhausted(
                f"sample budget {self.budget} exceeded (requested {self.position + count})")
        block = self.instance.sample(self.rng, count)
        self.windows.append((self.position, self.position + count))
        self.position += count
        return block


@dataclass
class VrpgTrace:
    epoch_anchors: list
    samples_drawn: int
    final_point: np.ndarray
    per_epoch_anchor_error: list | None = None
    epoch_windows: list = field(default_factory=list)
    init_projected: bool = False


def run_vrpg(instance, reg: Regularizer, plan: VrpgPlan, init=None, rng=None,
             ground_truth=None, budget: int | None = None,
             use_kernels: bool | None = None) -> VrpgTrace:
    """Run VRPG and return the trace of epoch anchors.

    ``epoch_windows[m]`` is ``(j_m, j_m + T_m, j_m + T_m + K)``: the anchor
    samples occupy ``[j_m, j_m + T_m)`` and the inner-step samples
    ``[j_m + T_m, j_m + T_m + K)`` of the stream.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    projected = False
    if init is None:
        x = reg.prox(np.zeros(instance.dim), plan.step)
    else:
        x = reg._check(init, "init").astype(float)
        if not np.isfinite(reg.value(x)):
            x = reg.prox(x, plan.step)
            projected = True
    stream = SampleStream(instance, rng, budget)
    anchors = [x.copy()]
    windows = []
    K = plan.epoch_steps
    for T in plan.recenter_sizes:
        j = stream.position
        block = stream.take(T + K)
        gbar = _backend.column_mean(instance.grad_batch(x, block[:T]), use_kernels)
        x = _backend.vrpg_epoch(instance, reg, x, gbar, block[T:], plan.step, use_kernels)
        anchors.append(x.copy())
        windows.append((j, j + T, j + T + K))
    errors = None
    if ground_truth is not None:
        gt = np.asarray(ground_truth, dtype=float)
        errors = [float((a - gt) @ (a - gt)) for a in anchors]
    return VrpgTrace(anchors, stream.position, x, errors, windows, projected)
