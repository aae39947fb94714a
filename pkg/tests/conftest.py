"""Shared fixtures and helpers for the licov test suite."""

import numpy as np
import pytest

from licov import se3
from licov.scenes import make_synthetic_scene


def random_twist(rng, max_angle=3.0, max_trans=2.0):
    """Draw a twist (u, w) with rotation magnitude strictly below max_angle."""
    u = rng.uniform(-max_trans, max_trans, 3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return np.concatenate([u, angle * axis])


def random_pose(rng, max_angle=3.0, max_trans=2.0):
    return se3.exp(random_twist(rng, max_angle, max_trans))


def random_spd(rng, dim=6, scale=1.0):
    a = rng.normal(size=(dim, dim))
    return a @ a.T * scale + 1e-3 * np.eye(dim)


@pytest.fixture(scope="session")
def room_sequence():
    return make_synthetic_scene("room", seed=7)


@pytest.fixture(scope="session")
def corridor_sequence():
    return make_synthetic_scene("corridor", seed=7)


@pytest.fixture(scope="session")
def plane_sequence():
    return make_synthetic_scene("plane", seed=7)
