"""Seeding, statistics and replication helpers shared across modules."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def hash64(*parts) -> int:
    """Stable 64-bit hash of ``parts`` (blake2b over their ``|``-joined str)."""
    key = "|".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def substream(master_seed: int, instance_id: str, n: int, rep: int) -> int:
    """Seed of replication ``rep`` at grid point ``n``."""
    return hash64(master_seed, instance_id, n, rep)


def base_seed(rng) -> int:
    """Normalise an int seed or a Generator into an integer master seed."""
    if rng is None:
        return 0
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2 ** 63))
    return int(rng)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def stable_mean(rows: np.ndarray) -> np.ndarray:
    """Column means with exactly rounded sums (``math.fsum``)."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    return np.array([math.fsum(col) / n for col in rows.T])


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def ratio_se(a, b) -> tuple[float, float]:
    """Ratio of means ``mean(a) / mean(b)`` and its delta-method std error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ma, mb = a.mean(), b.mean()
    if mb == 0:
        return (0.0, 0.0) if ma == 0 else (math.inf, math.inf)
    r = ma / mb
    n = a.size
    if n < 2:
        return float(r), 0.0
    resid = (a - r * b) / mb
    return float(r), float(resid.std(ddof=1) / math.sqrt(n))


def digest(payload) -> str:
    text = json.dumps(payload, sort_keys=True, default=_jsonable)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "describe"):
        return obj.describe()
    return repr(obj)


def map_replications(fn, args: list, jobs: int = 1) -> list:
    """``[fn(*a) for a in args]``, optionally across worker processes.

    Output order always follows ``args``; ``fn`` must be a module-level
    function when ``jobs > 1``.
    """
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*args), chunksize=max(1, len(args) // (4 * jobs))))
