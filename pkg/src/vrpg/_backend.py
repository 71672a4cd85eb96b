"""Selects the compiled core or the pure-Python fallback at import time.

Set ``VRPG_PURE_PYTHON=1`` to force the fallback. The compiled path only
covers quadratic instances (``grad f(x, z) = A x - z``) with regularizers
that provide a ``kernel_spec``; everything else runs the Python loop.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

if os.environ.get("VRPG_PURE_PYTHON", "").strip() not in ("", "0"):
    _kernels = None

BACKEND = "cython" if _kernels is not None else "python"


def has_kernels() -> bool:
    return _kernels is not None


def _kernel_args(instance, reg):
    if _kernels is None or getattr(instance, "hessian_matrix", None) is None:
        return None
    spec = reg.kernel_spec()
    if spec is None:
        return None
    code, p1, p2, s = spec
    return code, np.ascontiguousarray(p1), np.ascontiguousarray(p2), float(s)


def column_mean(rows, use_kernels: bool | None = None) -> np.ndarray:
    """Compensated column mean of a 2-d array."""
    rows = np.ascontiguousarray(rows, dtype=float)
    if use_kernels is not False and _kernels is not None:
        return _kernels.compensated_column_mean(rows)
    n = rows.shape[0]
    return np.array([math.fsum(col) / n for col in rows.T])


def python_vrpg_epoch(instance, reg, anchor, gbar, zs, step):
    x = np.array(anchor, dtype=float, copy=True)
    for z in zs:
        g = (instance.grad(x, z) - instance.grad(anchor, z)) + gbar
        x = reg.prox(x - step * g, step)
    return x


def kernel_vrpg_epoch(instance, reg, anchor, gbar, zs, step):
    code, p1, p2, s = _kernel_args(instance, reg)
    A = np.ascontiguousarray(instance.hessian_matrix)
    anchor = np.ascontiguousarray(anchor, dtype=float)
    return _kernels.vrpg_epoch_quadratic(
        A, A @ anchor, np.ascontiguousarray(gbar, dtype=float),
        np.ascontiguousarray(zs, dtype=float), anchor, float(step), code, p1, p2, s,
    )


def vrpg_epoch(instance, reg, anchor, gbar, zs, step, use_kernels: bool | None = None):
    """Run the inner loop of one epoch starting from ``anchor``."""
    if use_kernels is not False and _kernel_args(instance, reg) is not None:
        return kernel_vrpg_epoch(instance, reg, anchor, gbar, zs, step)
    if use_kernels:
        raise RuntimeError("compiled kernels unavailable for this instance/regularizer")
    return python_vrpg_epoch(instance, reg, anchor, gbar, zs, step)


def python_sgd_pr(instance, reg, zs, x0, alphas):
    x = np.array(x0, dtype=float, copy=True)
    iterates = [x]
    for z, a in zip(zs, alphas):
        x = reg.prox(x - a * instance.grad(x, z), a)
        iterates.append(x)
    avg = np.array([math.fsum(col) / len(iterates) for col in np.asarray(iterates).T])
    return x, avg


def sgd_pr(instance, reg, zs, x0, alphas, use_kernels: bool | None = None):
    if use_kernels is not False and _kernel_args(instance, reg) is not None:
        code, p1, p2, s = _kernel_args(instance, reg)
        return _kernels.sgd_pr_quadratic(
            np.ascontiguousarray(instance.hessian_matrix), np.ascontiguousarray(zs, dtype=float),
            np.ascontiguousarray(x0, dtype=float), np.ascontiguousarray(alphas, dtype=float),
            code, p1, p2, s,
        )
    if use_kernels:
        raise RuntimeError("compiled kernels unavailable for this instance/regularizer")
    return python_sgd_pr(instance, reg, zs, x0, alphas)
