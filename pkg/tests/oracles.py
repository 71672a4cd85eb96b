"""Independent reference routes used by the tests."""

import itertools

import numpy as np


def polyhedron_projection(v, G, h, eq=None, tol=1e-9):
    """Nearest point of ``{G x <= h, E x = e}`` by enumerating active faces.

    Each subset of inequality rows is made tight together with the
    equalities, the affine least-distance problem is solved in closed form,
    and the nearest feasible candidate wins.
    """
    v = np.asarray(v, float)
    d = v.shape[0]
    E, e = eq if eq is not None else (np.zeros((0, d)), np.zeros(0))
    best, best_d = None, np.inf
    m = G.shape[0]
    for k in range(0, min(m, d) + 1):
        for S in itertools.combinations(range(m), k):
            A = np.vstack([G[list(S)], E])
            b = np.concatenate([h[list(S)], e])
            if A.shape[0]:
                lam = np.linalg.lstsq(A @ A.T, A @ v - b, rcond=None)[0]
                x = v - A.T @ lam
                if np.linalg.norm(A @ x - b) > tol:
                    continue
            else:
                x = v.copy()
            if np.all(G @ x <= h + tol) and (E.shape[0] == 0 or np.allclose(E @ x, e, atol=tol)):
                dist = np.linalg.norm(x - v)
                if dist < best_d:
                    best, best_d = x, dist
    return best


def ball_projection_bisection(v, c, r, iters=200):
    """Projection onto a ball via bisection on the multiplier ``nu`` in
    ``x(nu) = (v + nu c) / (1 + nu)``."""
    v, c = np.asarray(v, float), np.asarray(c, float)
    if np.linalg.norm(v - c) <= r:
        return v.copy()
    lo, hi = 0.0, 1.0
    while np.linalg.norm((v + hi * c) / (1 + hi) - c) > r:
        hi *= 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm((v + mid * c) / (1 + mid) - c) > r:
            lo = mid
        else:
            hi = mid
    return (v + hi * c) / (1 + hi)


def soft_threshold_enumeration(v, t):
    """Per-coordinate minimum of ``0.5 (y - v)^2 + t |y|`` over the three
    stationary-point candidates."""
    out = np.empty_like(v)
    for i, vi in enumerate(v):
        cands = [vi - t, vi + t, 0.0]
        obj = [0.5 * (c - vi) ** 2 + t * abs(c) for c in cands]
        out[i] = cands[int(np.argmin(obj))]
    return out


def grid_projection_2d(v, contains, lo=-3.0, hi=3.0, h=1e-3):
    """Nearest grid point of a 2-d set (resolution ``h``).

    ``lo`` and ``hi`` are scalars or per-axis bounds of the search window.
    """
    lo, hi = np.broadcast_to(lo, 2), np.broadcast_to(hi, 2)
    xs = np.arange(lo[0], hi[0] + h / 2, h)
    ys = np.arange(lo[1], hi[1] + h / 2, h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    mask = contains(pts)
    pts = pts[mask]
    k = np.argmin(np.sum((pts - v) ** 2, axis=1))
    return pts[k]
