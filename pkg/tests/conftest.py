import numpy as np
import pytest

from vrpg.instances import canonical_instance, make_quadratic_instance
from vrpg.prox import Ball2


@pytest.fixture
def canonical():
    return canonical_instance(0.1)


@pytest.fixture
def active_ball():
    """A = I_2, theta = (2, 0), unit ball, sigma = 0.1: x* = (1, 0) on the boundary."""
    inst = make_quadratic_instance(np.eye(2), [2.0, 0.0], 0.01 * np.eye(2))
    return inst, Ball2(np.zeros(2), 1.0)


def random_spd(rng, d, lo=1.0, hi=4.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (Q * rng.uniform(lo, hi, d)) @ Q.T
