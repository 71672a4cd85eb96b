"""Monte Carlo harnesses for the quantitative claims behind VRPG.

Every harness returns a :class:`ClaimReport` whose ``passed`` flag is
``observed <= bound + 3 * std_err``. Replication ``r`` uses the substream
``hash64(seed, f"{instance_id}/{claim}", n, r)``, so reports are
reproducible from the digest inputs and the master seed.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._util import base_seed, digest, map_replications, mean_se, ratio_se, substream
from .algorithm import VrpgPlan, derive_plan, log_fn, run_vrpg, theorem_precondition
from .baselines import DEFAULT_TOL
from .benchmark import _solve_tilt, estimate_delta_sq, tilt_vector
from .instances import solve_population

__all__ = [
    "ClaimReport",
    "place_anchor",
    "verify_variance_reduction",
    "verify_epoch_contraction",
    "verify_solution_lipschitz",
    "verify_lipschitz_rate",
    "lipschitz_rate_from",
    "verify_theorem",
    "compare_schedules",
    "ablate",
]

MARGIN = 3.0


@dataclass
class ClaimReport:
    claim_id: str
    observed: float
    bound: float
    std_err: float
    passed: bool
    replications: int
    config_digest: str
    n: int = 0
    per_rep: list = field(default_factory=list, repr=False)
    seeds: list = field(default_factory=list, repr=False)
    details: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, claim_id, observed, bound, std_err, **kw):
        passed = bool(observed <= bound + MARGIN * std_err)
        return cls(claim_id, float(observed), float(bound), float(std_err), passed, **kw)

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.claim_id}: observed={self.observed:.6g} "
                f"bound={self.bound:.6g} (+3se={MARGIN * self.std_err:.3g})")


def place_anchor(reg, x_star, dist: float, rng, attempts: int = 64) -> np.ndarray:
    """A point of ``dom R`` at distance ``dist`` from ``x_star`` in a random
    feasible direction."""
    x_star = np.asarray(x_star, dtype=float)
    d = x_star.shape[0]
    if dist == 0:
        return x_star.copy()
    for _ in range(attempts):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        if not reg.is_indicator:
            return x_star + dist * u
        scale = dist
        for _ in range(40):
            delta = reg.project(x_star + scale * u) - x_star
            nd = float(np.linalg.norm(delta))
            if nd >= dist:
                # convexity keeps the shortened segment feasible
                return x_star + (dist / nd) * delta
            scale *= 2.0
    raise ValueError(f"could not place a feasible anchor at distance {dist}")


def _grad_noise_moment(instance, point, draws, rng, chunk):
    vals = []
    pg = instance.population_grad(point)
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        e = instance.grad_batch(point, instance.sample(rng, m)) - pg
        vals.append(np.einsum("ij,ij->i", e, e))
    return np.concatenate(vals)


def verify_variance_reduction(instance, x, anchor, T: int, draws: int = 10_000, rng=0,
                              chunk: int = 1000) -> ClaimReport:
    """Second moment of the recentered-gradient error against
    ``3 E||grad f(anchor, z) - grad f(anchor)||^2 / T + 6 L^2 ||x - anchor||^2``.

    Each draw uses a fresh anchor batch of ``T`` samples and an independent
    step sample; the noise moment at the anchor is estimated from
    ``draws`` further samples.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    x = np.asarray(x, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    pg_x = instance.population_grad(x)
    errs = np.empty(draws)
    per = max(1, chunk // max(1, T))
    i = 0
    while i < draws:
        m = min(per, draws - i)
        block = instance.sample(rng, m * (T + 1))
        for b in range(m):
            zs = block[b * (T + 1): (b + 1) * (T + 1)]
            gbar = instance.grad_batch(anchor, zs[:T]).mean(axis=0)
            z = zs[T]
            e = instance.grad(x, z) + (gbar - instance.grad(anchor, z)) - pg_x
            errs[i + b] = e @ e
        i += m
    obs, se_obs = mean_se(errs)
    noise = _grad_noise_moment(instance, anchor, draws, rng, chunk)
    m2, se_m2 = mean_se(noise)
    dist2 = float((x - anchor) @ (x - anchor))
    bound = MARGIN * m2 / T + 6.0 * instance.L ** 2 * dist2
    se = math.sqrt(se_obs ** 2 + (MARGIN * se_m2 / T) ** 2)
    return ClaimReport.build(
        "variance_reduction", obs, bound, se, replications=draws,
        config_digest=digest({"claim": "variance_reduction", "instance": instance, "x": x,
                              "anchor": anchor, "T": T, "draws": draws}),
        n=T, details={"noise_moment": m2, "dist_sq": dist2},
    )


def _lemma1_rep(instance, reg, plan, x_star, anchor, anchor_dist, seed, tol, use_kernels):
    rng = np.random.default_rng(seed)
    if anchor is None:
        anchor = place_anchor(reg, x_star, anchor_dist, rng)
    T, K = plan.recenter_size, plan.epoch_steps
    block = instance.sample(rng, T + K)
    gbar = _backend.column_mean(instance.grad_batch(anchor, block[:T]))
    v = gbar - instance.population_grad(anchor)
    x_hat = _solve_tilt(instance, reg, v, anchor, tol).x
    x_next = _backend.vrpg_epoch(instance, reg, anchor, gbar, block[T:], plan.step, use_kernels)
    a = x_next - x_hat
    b = anchor - x_hat
    return float(a @ a), float(b @ b)


def verify_epoch_contraction(instance, reg, plan: VrpgPlan, anchor_dist: float = 1.0,
                             replications: int = 200, rng=0, mode: str = "fixed",
                             x_star=None, tol: float = DEFAULT_TOL,
                             instance_id: str = "instance", jobs: int = 1,
                             use_kernels: bool | None = None) -> ClaimReport:
    """One epoch contracts towards the epoch-perturbed solution by 1/20.

    ``mode="fixed"`` places the anchor once (shared by all replications);
    ``mode="random"`` draws a fresh anchor direction per replication.
    The reported ratio is ``mean ||x_next - x_hat||^2 / mean ||anchor - x_hat||^2``.
    """
    if not plan.feasible:
        raise ValueError("plan violates the sample-size precondition")
    if mode not in ("fixed", "random"):
        raise ValueError(f"unknown anchor mode {mode!r}")
    if x_star is None:
        x_star = solve_population(instance, reg, tol)
    seed = base_seed(rng)
    tag = f"{instance_id}/lemma1-{mode}"
    anchor = None
    if mode == "fixed":
        anchor = place_anchor(reg, x_star, anchor_dist,
                              np.random.default_rng(substream(seed, tag, plan.n_total, -1)))
    seeds = [substream(seed, tag, plan.n_total, r) for r in range(replications)]
    out = map_replications(
        _lemma1_rep,
        [(instance, reg, plan, x_star, anchor, anchor_dist, s, tol, use_kernels) for s in seeds],
        jobs,
    )
    a = np.array([o[0] for o in out])
    b = np.array([o[1] for o in out])
    ratio, se = ratio_se(a, b)
    return ClaimReport.build(
        f"lemma1_{mode}", ratio, 1.0 / 20.0, se, replications=replications,
        config_digest=digest({"claim": tag, "instance": instance, "reg": reg, "plan": plan,
                              "anchor_dist": anchor_dist, "reps": replications, "seed": seed}),
        n=plan.n_total, per_rep=(a / np.where(b > 0, b, 1.0)).tolist(), seeds=seeds,
        details={"mean_after": float(a.mean()), "mean_before": float(b.mean())},
    )


def _lipschitz_rep(instance, reg, x_star, anchor, T, seed, tol):
    rng = np.random.default_rng(seed)
    zs = instance.sample(rng, T)
    x_f = _solve_tilt(instance, reg, tilt_vector(instance, anchor, zs), x_star, tol).x
    x_g = _solve_tilt(instance, reg, tilt_vector(instance, x_star, zs), x_star, tol).x
    d = x_g - x_f
    return float(d @ d)


def _lipschitz_values(instance, reg, x_star, anchor, T, replications, seed, tag, tol, jobs):
    seeds = [substream(seed, tag, T, r) for r in range(replications)]
    vals = map_replications(_lipschitz_rep,
                            [(instance, reg, x_star, anchor, T, s, tol) for s in seeds], jobs)
    return np.array(vals), seeds


def verify_solution_lipschitz(instance, reg, anchor_dist: float = 1.0, T: int = 1000,
                              replications: int = 200, rng=0, x_star=None,
                              tol: float = DEFAULT_TOL, instance_id: str = "instance",
                              jobs: int = 1) -> ClaimReport:
    """Distance between solutions tilted at the anchor and at ``x*``
    against ``16 L^2 ||anchor - x*||^2 / (T mu^2)``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if x_star is None:
        x_star = solve_population(instance, reg, tol)
    seed = base_seed(rng)
    tag = f"{instance_id}/lipschitz"
    anchor = place_anchor(reg, x_star, anchor_dist,
                          np.random.default_rng(substream(seed, tag, 0, -1)))
    vals, seeds = _lipschitz_values(instance, reg, x_star, anchor, T, replications, seed, tag,
                                    tol, jobs)
    obs, se = mean_se(vals)
    dist2 = float((anchor - x_star) @ (anchor - x_star))
    bound = 16.0 * instance.L ** 2 * dist2 / (T * instance.mu ** 2)
    return ClaimReport.build(
        "lipschitz", obs, bound, se, replications=replications,
        config_digest=digest({"claim": tag, "instance": instance, "reg": reg, "T": T,
                              "anchor_dist": anchor_dist, "reps": replications, "seed": seed}),
        n=T, per_rep=vals.tolist(), seeds=seeds, details={"dist_sq": dist2},
    )


def verify_lipschitz_rate(instance, reg, anchor_dist: float = 1.0, T: int = 1000,
                          factor: int = 4, replications: int = 200, rng=0, x_star=None,
                          tol: float = DEFAULT_TOL, instance_id: str = "instance",
                          jobs: int = 1) -> ClaimReport:
    """1/T scaling: ``mean(T) / mean(factor * T)`` within a factor 2 of ``factor``.

    Reported as ``observed = |log2(ratio / factor)|`` against ``bound = 1``
    with zero std error, so the factor-2 window is the whole tolerance.
    """
    small = verify_solution_lipschitz(instance, reg, anchor_dist, T, replications, rng,
                                      x_star, tol, instance_id, jobs)
    large = verify_solution_lipschitz(instance, reg, anchor_dist, factor * T, replications, rng,
                                      x_star, tol, instance_id, jobs)
    return lipschitz_rate_from(small, large, factor)


def lipschitz_rate_from(small: ClaimReport, large: ClaimReport, factor: float) -> ClaimReport:
    """Rate claim from two solution-Lipschitz reports at ``T`` and ``factor * T``."""
    if large.observed > 0 and small.observed > 0:
        ratio = small.observed / large.observed
        obs = abs(math.log2(ratio / factor))
    else:
        ratio, obs = math.nan, math.inf
    return ClaimReport.build(
        "lipschitz_rate", obs, 1.0, 0.0, replications=small.replications,
        config_digest=digest({"claim": "lipschitz_rate", "a": small.config_digest,
                              "b": large.config_digest}),
        n=small.n, details={"ratio": ratio, "mean_T": small.observed,
                            "mean_factor_T": large.observed, "factor": factor},
    )


def _theorem_rep(instance, reg, plan, init, x_star, seed, use_kernels):
    trace = run_vrpg(instance, reg, plan, init, seed, use_kernels=use_kernels)
    e = trace.final_point - x_star
    return float(e @ e)


def _vrpg_errors(instance, reg, plan, init, x_star, replications, seed, tag, jobs, use_kernels):
    seeds = [substream(seed, tag, plan.n_total, r) for r in range(replications)]
    errs = map_replications(_theorem_rep,
                            [(instance, reg, plan, init, x_star, s, use_kernels) for s in seeds],
                            jobs)
    return np.array(errs), seeds


def verify_theorem(instance, reg, n: int, init=None, replications: int = 200, rng=0,
                   plan: VrpgPlan | None = None, delta_replications: int = 200,
                   x_star=None, tol: float = DEFAULT_TOL, log_base: float = math.e,
                   instance_id: str = "instance", jobs: int = 1,
                   use_kernels: bool | None = None) -> ClaimReport:
    """End-to-end mean squared error of VRPG against
    ``||x_1 - x*||^2 / N^2 + (7 log N / N) * delta^2(N / log N)``.

    ``delta^2`` is estimated from ``delta_replications`` independent tilts
    with ``ceil(N / log N)`` samples each. ``plan`` overrides the derived
    tuning (ablations); its ``log_base`` is used in the bound.
    """
    if plan is not None:
        log_base = plan.log_base
    if not theorem_precondition(n, instance.mu, instance.L, log_base):
        raise ValueError(f"N={n} violates N/log N >= 1920 L^2/mu^2")
    if plan is None:
        plan = derive_plan(n, instance.mu, instance.L, "constant_paper", log_base)
    if x_star is None:
        x_star = solve_population(instance, reg, tol)
    x1 = reg.prox(np.zeros(instance.dim), plan.step) if init is None else reg.prox(
        np.asarray(init, dtype=float), plan.step)
    seed = base_seed(rng)
    errs, seeds = _vrpg_errors(instance, reg, plan, x1, x_star, replications, seed,
                               f"{instance_id}/theorem", jobs, use_kernels)
    obs, se_obs = mean_se(errs)
    lg = log_fn(log_base)(n)
    n_tilt = math.ceil(n / lg)
    est = estimate_delta_sq(instance, reg, n_tilt, delta_replications, seed, tol, x_star,
                            f"{instance_id}/delta", jobs)
    gap = float((x1 - x_star) @ (x1 - x_star))
    coef = 7.0 * lg / n
    bound = gap / n ** 2 + coef * est.delta_sq
    se = math.sqrt(se_obs ** 2 + (coef * est.std_err) ** 2)
    return ClaimReport.build(
        "theorem", obs, bound, se, replications=replications,
        config_digest=digest({"claim": "theorem", "instance": instance, "reg": reg,
                              "plan": plan, "init": x1, "reps": replications,
                              "delta_reps": delta_replications, "seed": seed}),
        n=n, per_rep=errs.tolist(), seeds=seeds,
        details={"delta_sq": est.delta_sq, "delta_se": est.std_err, "n_tilt": n_tilt,
                 "init_gap": gap, "plan": plan.describe()},
    )


def compare_schedules(instance, reg, n: int, replications: int = 200, rng=0, t0=None,
                      init=None, x_star=None, tol: float = DEFAULT_TOL,
                      log_base: float = math.e, instance_id: str = "instance",
                      jobs: int = 1, use_kernels: bool | None = None) -> ClaimReport:
    """Doubling-epoch schedule against the constant schedule at budget ``n``:
    ``mean err(doubling) <= mean err(constant) + 3 se``."""
    const = derive_plan(n, instance.mu, instance.L, "constant_paper", log_base)
    dbl = derive_plan(n, instance.mu, instance.L, "doubling", log_base, t0)
    if x_star is None:
        x_star = solve_population(instance, reg, tol)
    x1 = reg.prox(np.zeros(instance.dim) if init is None else np.asarray(init, float), 1.0)
    seed = base_seed(rng)
    e_c, _ = _vrpg_errors(instance, reg, const, x1, x_star, replications, seed,
                          f"{instance_id}/theorem", jobs, use_kernels)
    e_d, seeds = _vrpg_errors(instance, reg, dbl, x1, x_star, replications, seed,
                              f"{instance_id}/doubling", jobs, use_kernels)
    m_c, se_c = mean_se(e_c)
    m_d, se_d = mean_se(e_d)
    return ClaimReport.build(
        "doubling_vs_constant", m_d, m_c, math.sqrt(se_c ** 2 + se_d ** 2),
        replications=replications,
        config_digest=digest({"claim": "doubling", "instance": instance, "reg": reg,
                              "const": const, "dbl": dbl, "reps": replications, "seed": seed}),
        n=n, per_rep=e_d.tolist(), seeds=seeds,
        details={"doubling_plan": dbl.describe(), "constant_samples": const.samples_required,
                 "doubling_samples": dbl.samples_required},
    )


def ablate(plan: VrpgPlan, step_scale: float = 1.0, steps_scale: float = 1.0) -> VrpgPlan:
    """Copy of ``plan`` with the step and/or epoch length rescaled."""
    return dataclasses.replace(plan, step=plan.step * step_scale,
                               epoch_steps=max(1, int(plan.epoch_steps * steps_scale)))
