"""Proximal operators and Euclidean projections.

Every regularizer exposes ``prox(v, step)`` and ``value(x)``. Indicator
regularizers (constraint sets) additionally expose ``project``, a smooth
inequality encoding ``constraint_functions`` used by the KKT analytics, and
``normal_cone_generators`` used by :func:`subdifferential_residual`.

Indicator values at infeasible points are ``math.inf``, never a large float.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import linprog, nnls

__all__ = [
    "Regularizer",
    "ConstraintSet",
    "Zero",
    "L1",
    "Box",
    "Ball2",
    "Simplex",
    "Orthant",
    "Halfspaces",
    "ProxResult",
    "DescentCheck",
    "DykstraError",
    "ApproximateResidualWarning",
    "prox",
    "subdifferential_residual",
    "check_prox_descent",
]

# Kernel codes shared with the compiled core (see _kernels.pyx).
KERNEL_ZERO = 0
KERNEL_BOX = 1
KERNEL_BALL2 = 2
KERNEL_ORTHANT = 3
KERNEL_SIMPLEX = 4
KERNEL_L1 = 5
KERNEL_HALFSPACE = 6

_EPS = np.finfo(float).eps
DYKSTRA_TOL = 1e-12
DYKSTRA_MAX_SWEEPS = 100_000


class DykstraError(RuntimeError):
    """Dykstra's algorithm did not reach the requested accuracy."""


class ApproximateResidualWarning(UserWarning):
    """Residual computed from a numerically detected active set."""


class ProxResult(NamedTuple):
    point: np.ndarray
    objective_shift: float


class DescentCheck(NamedTuple):
    holds: bool
    slack: float


def _vector(x, name="input") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


class Regularizer:
    """Base class for the penalty R in ``min f(x) + R(x)``."""

    kind: str = "regularizer"
    is_indicator = False

    def __init__(self, dim: int):
        dim = int(dim)
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = dim

    def _check(self, x, name="input") -> np.ndarray:
        arr = _vector(x, name)
        if arr.shape[0] != self.dim:
            raise ValueError(
                f"dimension mismatch: {name} has length {arr.shape[0]}, "
                f"{self.kind} expects {self.dim}"
            )
        return arr

    def prox(self, v, step: float) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> float:
        raise NotImplementedError

    def kernel_spec(self):
        """``(code, vec1, vec2, scalar)`` for the compiled core, or None."""
        return None

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}

    def __repr__(self):
        fields = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "kind")
        return f"{type(self).__name__}({fields})"


class Zero(Regularizer):
    kind = "zero"

    def prox(self, v, step):
        return self._check(v).copy()

    def value(self, x):
        self._check(x)
        return 0.0

    def constraint_functions(self, x):
        x = self._check(x)
        return np.zeros(0), np.zeros((0, self.dim)), np.zeros((0, self.dim, self.dim))

    def kernel_spec(self):
        z = np.zeros(self.dim)
        return KERNEL_ZERO, z, z, 0.0


class L1(Regularizer):
    """Weighted l1 penalty ``weight * ||x||_1``."""

    kind = "l1"

    def __init__(self, dim: int, weight: float = 1.0):
        super().__init__(dim)
        if not weight >= 0:
            raise ValueError("l1.weight must be >= 0")
        self.weight = float(weight)

    def prox(self, v, step):
        v = self._check(v)
        t = step * self.weight
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)

    def value(self, x):
        return self.weight * float(np.abs(self._check(x)).sum())

    def kernel_spec(self):
        z = np.zeros(self.dim)
        return KERNEL_L1, z, z, self.weight

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "weight": self.weight}


class ConstraintSet(Regularizer):
    """Indicator of a nonempty closed convex set.

    Subclasses implement ``project``, ``contains`` and
    ``constraint_functions``; the latter returns ``(g, grad_g, hess_g)`` for
    a smooth inequality description ``g_i(x) <= 0`` of the set.
    """

    is_indicator = True
    feas_tol = 1e-9

    def project(self, v) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float | None = None) -> bool:
        g, _, _ = self.constraint_functions(x)
        tol = self.feas_tol if tol is None else tol
        return bool(np.all(g <= tol))

    def prox(self, v, step):
        return self.project(v)

    def value(self, x):
        return 0.0 if self.contains(self._check(x)) else math.inf

    def constraint_functions(self, x):
        raise NotImplementedError

    def normal_cone_generators(self, x, tol: float = 1e-10):
        """Generators of the normal cone at ``x``.

        Returns ``(cone, lineal)``: rows of ``cone`` enter with nonnegative
        weights, rows of ``lineal`` with free sign.
        """
        g, G, _ = self.constraint_functions(x)
        active = np.abs(g) <= tol
        return G[active], np.zeros((0, self.dim))


class Box(ConstraintSet):
    kind = "box"

    def __init__(self, lower, upper):
        lower = _vector(lower, "box.lower")
        upper = _vector(upper, "box.upper")
        if lower.shape != upper.shape:
            raise ValueError("box.lower and box.upper must have equal length")
        if np.any(lower > upper):
            raise ValueError("box.lower must be <= box.upper componentwise")
        super().__init__(lower.shape[0])
        self.lower = lower
        self.upper = upper

    def project(self, v):
        return np.clip(self._check(v), self.lower, self.upper)

    def contains(self, x, tol=None):
        tol = self.feas_tol if tol is None else tol
        x = self._check(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def _finite_rows(self):
        up = np.flatnonzero(np.isfinite(self.upper))
        lo = np.flatnonzero(np.isfinite(self.lower))
        return up, lo

    def constraint_functions(self, x):
        x = self._check(x)
        up, lo = self._finite_rows()
        eye = np.eye(self.dim)
        g = np.concatenate([x[up] - self.upper[up], self.lower[lo] - x[lo]])
        G = np.vstack([eye[up], -eye[lo]]) if g.size else np.zeros((0, self.dim))
        return g, G, np.zeros((g.size, self.dim, self.dim))

    def normal_cone_generators(self, x, tol=1e-10):
        x = self._check(x)
        eye = np.eye(self.dim)
        at_up = np.isfinite(self.upper) & (np.abs(x - self.upper) <= tol)
        at_lo = np.isfinite(self.lower) & (np.abs(x - self.lower) <= tol)
        # degenerate coordinates (lower == upper) have a free-sign normal
        both = at_up & at_lo
        cone = np.vstack([eye[at_up & ~both], -eye[at_lo & ~both]])
        return cone, eye[both]

    def kernel_spec(self):
        return KERNEL_BOX, self.lower.copy(), self.upper.copy(), 0.0

    def describe(self):
        return {"kind": self.kind, "dim": self.dim,
                "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Ball2(ConstraintSet):
    kind = "ball2"

    def __init__(self, center, radius: float):
        center = _vector(center, "ball2.center")
        if not radius > 0:
            raise ValueError("ball2.radius must be > 0")
        super().__init__(center.shape[0])
        self.center = center
        self.radius = float(radius)

    def project(self, v):
        v = self._check(v)
        d = v - self.center
        nrm = float(np.linalg.norm(d))
        # slack of a few ulps keeps the projection bitwise idempotent
        if nrm <= self.radius * (1.0 + 4 * _EPS):
            return v.copy()
        return self.center + (self.radius / nrm) * d

    def contains(self, x, tol=None):
        tol = self.feas_tol if tol is None else tol
        return float(np.linalg.norm(self._check(x) - self.center)) <= self.radius + tol

    def constraint_functions(self, x):
        x = self._check(x)
        d = x - self.center
        g = np.array([d @ d - self.radius ** 2])
        G = (2.0 * d)[None, :]
        H = (2.0 * np.eye(self.dim))[None, :, :]
        return g, G, H

    def normal_cone_generators(self, x, tol=1e-10):
        x = self._check(x)
        d = x - self.center
        if abs(float(np.linalg.norm(d)) - self.radius) <= tol:
            return d[None, :], np.zeros((0, self.dim))
        return np.zeros((0, self.dim)), np.zeros((0, self.dim))

    def kernel_spec(self):
        return KERNEL_BALL2, self.center.copy(), np.zeros(self.dim), self.radius

    def describe(self):
        return {"kind": self.kind, "dim": self.dim,
                "center": self.center.tolist(), "radius": self.radius}


class Orthant(ConstraintSet):
    """The nonnegative orthant."""

    kind = "orthant"

    def project(self, v):
        return np.maximum(self._check(v), 0.0)

    def contains(self, x, tol=None):
        tol = self.feas_tol if tol is None else tol
        return bool(np.all(self._check(x) >= -tol))

    def constraint_functions(self, x):
        x = self._check(x)
        return -x, -np.eye(self.dim), np.zeros((self.dim, self.dim, self.dim))

    def kernel_spec(self):
        z = np.zeros(self.dim)
        return KERNEL_ORTHANT, z, z, 0.0


def project_simplex(v: np.ndarray, scale: float) -> np.ndarray:
    """Sort-based exact projection onto ``{x >= 0, sum(x) = scale}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - scale
    idx = np.arange(1, v.shape[0] + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


class Simplex(ConstraintSet):
    """Scaled probability simplex ``{x >= 0, sum(x) = scale}``.

    For KKT analytics the equality is encoded as two inequalities
    ``sum(x) - scale <= 0`` and ``scale - sum(x) <= 0``, followed by the
    orthant faces ``-x_i <= 0``.
    """

    kind = "simplex"

    def __init__(self, dim: int, scale: float = 1.0):
        super().__init__(dim)
        if not scale > 0:
            raise ValueError("simplex.scale must be > 0")
        self.scale = float(scale)

    def project(self, v):
        return project_simplex(self._check(v), self.scale)

    def contains(self, x, tol=None):
        tol = self.feas_tol if tol is None else tol
        x = self._check(x)
        return bool(np.all(x >= -tol) and abs(x.sum() - self.scale) <= tol * max(1.0, self.scale))

    def constraint_functions(self, x):
        x = self._check(x)
        s = x.sum() - self.scale
        ones = np.ones(self.dim)
        g = np.concatenate([[s, -s], -x])
        G = np.vstack([ones, -ones, -np.eye(self.dim)])
        return g, G, np.zeros((self.dim + 2, self.dim, self.dim))

    def normal_cone_generators(self, x, tol=1e-10):
        x = self._check(x)
        faces = -np.eye(self.dim)[np.abs(x) <= tol]
        return faces, np.ones((1, self.dim))

    def kernel_spec(self):
        z = np.zeros(self.dim)
        return KERNEL_SIMPLEX, z, z, self.scale

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "scale": self.scale}


class Halfspaces(ConstraintSet):
    """Intersection of halfspaces ``a_i^T x <= b_i``.

    A single halfspace is projected in closed form; two or more are handled
    by Dykstra's alternating projections. Feasibility of the system is
    checked at construction with a linear program.
    """

    kind = "halfspaces"

    def __init__(self, normals, offsets):
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError("halfspaces: need one offset per normal")
        if normals.shape[0] == 0:
            raise ValueError("halfspaces: empty list")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0):
            raise ValueError("halfspaces: zero normal vector")
        super().__init__(normals.shape[1])
        self.normals = normals
        self.offsets = offsets
        self._sqnorms = norms ** 2
        if normals.shape[0] > 1:
            res = linprog(np.zeros(self.dim), A_ub=normals, b_ub=offsets,
                          bounds=[(None, None)] * self.dim, method="highs")
            if res.status != 0:
                raise ValueError("halfspaces: infeasible system (empty intersection)")

    def _slack(self, v, i):
        a, b = self.normals[i], self.offsets[i]
        return a @ v - b - 4 * _EPS * (abs(b) + np.abs(a) @ np.abs(v))

    def _project_one(self, v, i):
        # points within rounding slack of the face count as feasible, and
        # the output is corrected until it passes the same test, so the map
        # is idempotent on its own output
        a = self.normals[i]
        x = v.copy()
        for _ in range(4):
            if self._slack(x, i) <= 0:
                break
            x = x - ((a @ x - self.offsets[i]) / self._sqnorms[i]) * a
        return x

    def project(self, v):
        v = self._check(v)
        m = self.normals.shape[0]
        if m == 1:
            return self._project_one(v, 0)
        x = v.copy()
        incs = np.zeros((m, self.dim))
        for _ in range(DYKSTRA_MAX_SWEEPS):
            x_prev = x
            for i in range(m):
                y = self._project_one(x + incs[i], i)
                incs[i] = x + incs[i] - y
                x = y
            if np.linalg.norm(x - x_prev) < DYKSTRA_TOL:
                return x
        raise DykstraError(
            f"Dykstra did not converge in {DYKSTRA_MAX_SWEEPS} sweeps "
            f"(last move {np.linalg.norm(x - x_prev):.3e})"
        )

    def contains(self, x, tol=None):
        tol = self.feas_tol if tol is None else tol
        return bool(np.all(self.normals @ self._check(x) - self.offsets <= tol))

    def constraint_functions(self, x):
        x = self._check(x)
        m = self.normals.shape[0]
        return self.normals @ x - self.offsets, self.normals.copy(), np.zeros((m, self.dim, self.dim))

    def kernel_spec(self):
        if self.normals.shape[0] != 1:
            return None
        return KERNEL_HALFSPACE, self.normals[0].copy(), np.zeros(self.dim), float(self.offsets[0])

    def describe(self):
        return {"kind": self.kind, "dim": self.dim,
                "normals": self.normals.tolist(), "offsets": self.offsets.tolist()}


def prox(reg: Regularizer, input, step: float = 1.0) -> ProxResult:
    """``argmin_y 0.5 * ||y - input||^2 + step * R(y)``.

    For indicators ``step`` has no effect and this is the Euclidean
    projection. ``objective_shift`` is ``R`` evaluated at the output.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    point = reg.prox(reg._check(input), float(step))
    return ProxResult(point, reg.value(point))


def _cone_distance(w, cone, lineal):
    """Distance from ``w`` to ``{cone^T a + lineal^T b : a >= 0}``."""
    if cone.shape[0] == 0 and lineal.shape[0] == 0:
        return float(np.linalg.norm(w))
    # free-sign generators enter as a +/- pair
    gens = np.vstack([cone, lineal, -lineal])
    _, rnorm = nnls(gens.T, w)
    return float(rnorm)


def subdifferential_residual(reg: Regularizer, x, g, tol: float = 1e-10) -> float:
    """Distance from ``-g`` to the subdifferential of ``R`` at ``x``.

    Zero (to about ``tol``) iff ``-g`` is a valid subgradient, i.e. ``x``
    is stationary for ``<g, .> + R``.
    """
    x = reg._check(x, "x")
    w = -reg._check(g, "g")
    if isinstance(reg, Zero):
        return float(np.linalg.norm(w))
    if isinstance(reg, L1):
        nz = np.abs(x) > tol
        r = np.where(nz, w - reg.weight * np.sign(x), np.maximum(np.abs(w) - reg.weight, 0.0))
        return float(np.linalg.norm(r))
    if isinstance(reg, ConstraintSet):
        if not reg.contains(x, tol=max(tol, reg.feas_tol)):
            raise ValueError("x is outside the constraint set")
        if isinstance(reg, Halfspaces) and reg.normals.shape[0] > 1:
            warnings.warn(
                "halfspace intersection: active set detected numerically, residual is approximate",
                ApproximateResidualWarning,
                stacklevel=2,
            )
        cone, lineal = reg.normal_cone_generators(x, tol=tol)
        return _cone_distance(w, cone, lineal)
    raise TypeError(f"unsupported regularizer {type(reg).__name__}")


def check_prox_descent(
    f_oracle: Callable[[np.ndarray], tuple[float, np.ndarray]],
    reg: Regularizer,
    x,
    y,
    v,
    step: float,
    mu: float,
    L: float,
    atol: float = 1e-10,
) -> DescentCheck:
    """Check the one-step proximal descent inequality.

    With ``x+ = prox(x - step * v)``, ``g = (x - x+) / step`` and
    ``delta = v - grad f(x)``, tests

        f(y) + R(y) >= f(x+) + R(x+) + g^T (y - x) + step/2 ||g||^2
                       + mu/2 ||y - x||^2 + delta^T (x+ - y)

    ``f_oracle(x)`` returns ``(f(x), grad f(x))`` for a ``mu``-strongly
    convex, ``L``-smooth ``f``. Requires ``step <= 1 / L``.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    if step * L > 1.0 + 1e-12:
        raise ValueError(f"step {step} exceeds 1/L = {1.0 / L}")
    x = reg._check(x, "x")
    y = reg._check(y, "y")
    v = reg._check(v, "v")
    x_plus = reg.prox(x - step * v, step)
    _, grad_x = f_oracle(x)
    f_plus, _ = f_oracle(x_plus)
    f_y, _ = f_oracle(y)
    r_y = reg.value(y)
    r_plus = reg.value(x_plus)
    g = (x - x_plus) / step
    delta = v - grad_x
    lhs = f_y + r_y
    rhs = (
        f_plus + r_plus + g @ (y - x) + 0.5 * step * (g @ g)
        + 0.5 * mu * ((y - x) @ (y - x)) + delta @ (x_plus - y)
    )
    slack = lhs - rhs if math.isfinite(lhs) else math.inf
    return DescentCheck(bool(slack >= -atol), float(slack))
