"""``vrpg-bench``: run solvers and claim verifiers from a config file.

Every subcommand writes ``<command>_results.csv`` (one row per replication)
and, when claims are produced, ``<command>_claims.csv``. Replication ``r``
at grid point ``n`` is seeded with ``hash64(master_seed, instance_id, n, r)``;
verifier subcommands tag the instance id with the claim name (for example
``"<id>/theorem"``) so that claims never share sample streams.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import verify as V
from ._util import digest, substream
from .algorithm import PlanWarning, derive_plan, run_vrpg
from .baselines import SgdPlan, run_projected_sgd_pr, solve_m_estimator
from .benchmark import estimate_delta_sq
from .config import ConfigError, ExperimentConfig, build_instance, build_regularizer, load_config
from .instances import solve_population
from .prox import Zero

SCHEMA_VERSION = 1
ENV_OUT = "VRPG_BENCH_OUT"
DEFAULT_OUT = "vrpg_out"

CLAIM_COLUMNS = ("schema_version", "claim_id", "instance_id", "reg_id", "n", "observed",
                 "bound", "std_err", "pass", "seed", "config_digest", "error")
RESULT_COLUMNS = {
    "solve": ("schema_version", "instance_id", "reg_id", "method", "n", "rep", "seed",
              "samples_drawn", "error_sq", "scaled_error_sq", "x", "error"),
    "benchmark-delta": ("schema_version", "instance_id", "reg_id", "n", "rep", "seed",
                        "scaled_error_sq", "solver_iters", "error"),
    "verify": ("schema_version", "claim_id", "instance_id", "reg_id", "n", "rep", "seed",
               "value", "error"),
}
COMMANDS = ("solve", "benchmark-delta", "verify-lemma1", "verify-lipschitz",
            "verify-theorem", "sweep")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, np.ndarray):
        return ";".join(fmt(float(v)) for v in value)
    return str(value)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])


class Context:
    def __init__(self, cfg: ExperimentConfig, jobs: int):
        self.cfg = cfg
        self.jobs = jobs
        self.instance = build_instance(cfg)
        self.reg = build_regularizer(cfg, self.instance.dim)
        self.tol = cfg.tolerances["solver_tol"]
        self.seed = cfg.master_seed
        self.log_base = cfg.method["log_base"]
        self._x_star = None

    @property
    def x_star(self):
        if self._x_star is None:
            self._x_star = solve_population(self.instance, self.reg, self.tol)
        return self._x_star

    def base_row(self, **kw):
        row = {"schema_version": SCHEMA_VERSION, "instance_id": self.cfg.instance_id,
               "reg_id": self.cfg.reg_id}
        row.update(kw)
        return row

    def plan(self, n):
        m = self.cfg.method
        return derive_plan(n, self.instance.mu, self.instance.L, m["schedule"],
                           self.log_base, m["t0"])


def _err(exc) -> str:
    return f"{type(exc).__name__}: {exc}"


def _claim_row(ctx, report: V.ClaimReport, error=""):
    return ctx.base_row(claim_id=report.claim_id, n=report.n, observed=report.observed,
                        bound=report.bound, std_err=report.std_err, **{"pass": report.passed},
                        seed=ctx.seed, config_digest=report.config_digest, error=error)


def _failed_claim(ctx, claim_id, n, exc):
    return ctx.base_row(claim_id=claim_id, n=n, observed=math.nan, bound=math.nan,
                        std_err=math.nan, **{"pass": False}, seed=ctx.seed,
                        config_digest="", error=_err(exc))


def _rep_rows(ctx, report):
    return [ctx.base_row(claim_id=report.claim_id, n=report.n, rep=r, seed=s, value=v, error="")
            for r, (s, v) in enumerate(zip(report.seeds, report.per_rep))]


def _solve_one(ctx, n, r):
    cfg, inst, reg = ctx.cfg, ctx.instance, ctx.reg
    seed = substream(ctx.seed, cfg.instance_id, n, r)
    rng = np.random.default_rng(seed)
    name = cfg.method["name"]
    if name == "vrpg":
        trace = run_vrpg(inst, reg, ctx.plan(n), rng=rng)
        x, drawn = trace.final_point, trace.samples_drawn
    elif name == "sgd_pr":
        m = cfg.method
        plan = SgdPlan(n, m["sgd_schedule"], m["sgd_c"], m["sgd_omega"])
        x, drawn = run_projected_sgd_pr(inst, reg, plan, np.zeros(inst.dim), rng)["averaged"], n
    else:
        x, drawn = solve_m_estimator(inst, reg, inst.sample(rng, n), ctx.tol), n
    e = x - ctx.x_star
    err = float(e @ e)
    return seed, drawn, err, x


def cmd_solve(ctx):
    rows = []
    for n in ctx.cfg.n_grid:
        for r in range(ctx.cfg.replications):
            try:
                seed, drawn, err, x = _solve_one(ctx, n, r)
                rows.append(ctx.base_row(method=ctx.cfg.method["name"], n=n, rep=r, seed=seed,
                                         samples_drawn=drawn, error_sq=err,
                                         scaled_error_sq=n * err, x=x, error=""))
            except Exception as exc:  # recorded per row, never aborts the sweep
                rows.append(ctx.base_row(method=ctx.cfg.method["name"], n=n, rep=r,
                                         seed=substream(ctx.seed, ctx.cfg.instance_id, n, r),
                                         error=_err(exc)))
    return rows, []


def _exact_delta(inst, reg):
    """Closed-form ``trace(A^-1 Sigma A^-1)`` when it applies."""
    if isinstance(reg, Zero) and getattr(inst, "hessian_matrix", None) is not None:
        Ainv = np.linalg.inv(inst.A)
        return float(np.trace(Ainv @ inst.Sigma @ Ainv))
    return None


def cmd_benchmark_delta(ctx):
    cfg = ctx.cfg
    rows, claims = [], []
    exact = _exact_delta(ctx.instance, ctx.reg)
    for n in cfg.n_grid:
        try:
            if cfg.replications < 2:
                raise ValueError("benchmark-delta needs replications >= 2")
            est = estimate_delta_sq(ctx.instance, ctx.reg, n, cfg.replications, ctx.seed,
                                    ctx.tol, ctx.x_star, cfg.instance_id, ctx.jobs)
        except Exception as exc:
            rows.extend(ctx.base_row(n=n, rep=r, seed=substream(ctx.seed, cfg.instance_id, n, r),
                                     error=_err(exc)) for r in range(cfg.replications))
            if exact is not None:
                claims.append(_failed_claim(ctx, "delta_exact", n, exc))
            continue
        for r, (s, v, it) in enumerate(zip(est.seeds, est.per_rep_values, est.solver_iters)):
            rows.append(ctx.base_row(n=n, rep=r, seed=s, scaled_error_sq=v, solver_iters=it,
                                     error=""))
        if exact is not None:
            rep = V.ClaimReport.build(
                "delta_exact", abs(est.delta_sq - exact), 0.0, est.std_err,
                replications=est.replications, n=n,
                config_digest=digest({"claim": "delta_exact", "instance": ctx.instance,
                                      "n": n, "reps": est.replications, "seed": ctx.seed}))
            claims.append(_claim_row(ctx, rep))
    return rows, claims


def _verify_loop(ctx, claim_id, run):
    rows, claims = [], []
    for n in ctx.cfg.n_grid:
        try:
            reports = run(n)
        except Exception as exc:
            claims.append(_failed_claim(ctx, claim_id, n, exc))
            rows.append(ctx.base_row(claim_id=claim_id, n=n, error=_err(exc)))
            continue
        for rep in reports:
            rows.extend(_rep_rows(ctx, rep))
            claims.append(_claim_row(ctx, rep))
    return rows, claims


def cmd_verify_lemma1(ctx):
    exp = ctx.cfg.experiment
    modes = ("fixed", "random") if exp["lemma1_mode"] == "both" else (exp["lemma1_mode"],)

    def run(n):
        plan = ctx.plan(n)
        return [V.verify_epoch_contraction(ctx.instance, ctx.reg, plan, exp["anchor_dist"],
                                           ctx.cfg.replications, ctx.seed, mode, ctx.x_star,
                                           ctx.tol, ctx.cfg.instance_id, ctx.jobs)
                for mode in modes]

    return _verify_loop(ctx, "lemma1", run)


def cmd_verify_lipschitz(ctx):
    exp = ctx.cfg.experiment
    by_t = {}

    def run(T):
        rep = V.verify_solution_lipschitz(ctx.instance, ctx.reg, exp["anchor_dist"], T,
                                          ctx.cfg.replications, ctx.seed, ctx.x_star, ctx.tol,
                                          ctx.cfg.instance_id, ctx.jobs)
        by_t[T] = rep
        return [rep]

    rows, claims = _verify_loop(ctx, "lipschitz", run)
    factor = exp["rate_factor"]
    for T in ctx.cfg.n_grid:
        big = by_t.get(T * factor)
        if T in by_t and big is not None:
            claims.append(_claim_row(ctx, V.lipschitz_rate_from(by_t[T], big, factor)))
    return rows, claims


def cmd_verify_theorem(ctx):
    exp = ctx.cfg.experiment

    def run(n):
        plan = ctx.plan(n)
        out = [V.verify_theorem(ctx.instance, ctx.reg, n, None, ctx.cfg.replications, ctx.seed,
                                plan, exp["delta_replications"], ctx.x_star, ctx.tol,
                                ctx.log_base, ctx.cfg.instance_id, ctx.jobs)]
        if exp["compare_doubling"]:
            out.append(V.compare_schedules(ctx.instance, ctx.reg, n, ctx.cfg.replications,
                                           ctx.seed, ctx.cfg.method["t0"], None, ctx.x_star,
                                           ctx.tol, ctx.log_base, ctx.cfg.instance_id, ctx.jobs))
        return out

    return _verify_loop(ctx, "theorem", run)


HANDLERS = {
    "solve": (cmd_solve, "solve"),
    "benchmark-delta": (cmd_benchmark_delta, "benchmark-delta"),
    "verify-lemma1": (cmd_verify_lemma1, "verify"),
    "verify-lipschitz": (cmd_verify_lipschitz, "verify"),
    "verify-theorem": (cmd_verify_theorem, "verify"),
}


def resolve_output(flag, cfg: ExperimentConfig) -> Path:
    """``--out`` flag, then the config's ``output``, then ``$VRPG_BENCH_OUT``, then ``./vrpg_out``."""
    for cand in (flag, cfg.experiment.get("output"), os.environ.get(ENV_OUT)):
        if cand:
            return Path(cand)
    return Path(DEFAULT_OUT)


def _row_failed(row) -> bool:
    return bool(row.get("error"))


def run_experiment(cfg: ExperimentConfig, command: str, out_dir: Path, jobs: int = 1,
                   quiet: bool = False, stream=None) -> int:
    """Run ``command`` and write its CSVs; returns the exit status.

    Exit status is 0 iff every claim passed and no result row recorded an error.
    """
    stream = stream or sys.stdout
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, jobs)
    todo = list(HANDLERS) if command == "sweep" else [command]
    all_claims, failed_rows = [], 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PlanWarning)
        for name in todo:
            handler, kind = HANDLERS[name]
            rows, claims = handler(ctx)
            write_csv(out_dir / f"{name}_results.csv", RESULT_COLUMNS[kind], rows)
            if claims or kind == "verify":
                write_csv(out_dir / f"{name}_claims.csv", CLAIM_COLUMNS, claims)
            all_claims.extend(claims)
            failed_rows += sum(_row_failed(r) for r in rows)
    if command == "sweep":
        write_csv(out_dir / "sweep_claims.csv", CLAIM_COLUMNS, all_claims)
    if not quiet:
        _print_summary(all_claims, failed_rows, stream)
    ok = all(c["pass"] for c in all_claims) and failed_rows == 0
    return 0 if ok else 1


def _print_summary(claims, failed_rows, stream):
    if claims:
        print(f"{'claim':<22} {'n':>9} {'observed':>14} {'bound':>14} {'std_err':>12}  pass",
              file=stream)
        for c in claims:
            flag = "yes" if c["pass"] else "NO"
            if c.get("error"):
                flag += f"  ({c['error']})"
            print(f"{c['claim_id']:<22} {c['n']:>9} {c['observed']:>14.6g} {c['bound']:>14.6g} "
                  f"{c['std_err']:>12.3g}  {flag}", file=stream)
    if failed_rows:
        print(f"{failed_rows} result row(s) recorded errors", file=stream)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrpg-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override experiment.master_seed")
        p.add_argument("--out", default=None, help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
        p.add_argument("--jobs", type=int, default=1, help="replication worker processes")
        p.add_argument("--quiet", action="store_true", help="suppress the summary table")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error in {args.config}:\n{exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.experiment["master_seed"] = args.seed
    try:
        out = resolve_output(args.out, cfg)
        return run_experiment(cfg, args.command, out, args.jobs, args.quiet)
    except (ValueError, TypeError) as exc:  # instance construction problems
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
