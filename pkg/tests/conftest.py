import numpy as np
import pytest

from graspfield.scene import Scene, PrismObject, generate_scene
from graspfield.se3 import Pose6, Workspace, quat_from_axis_angle


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def simple_scene():
    return generate_scene(3, "simple")


@pytest.fixture(scope="session")
def box_scene():
    """A single known box at a known pose, for hand-checkable assertions."""
    ws = Workspace(np.array([-0.28, -0.28, 0.0]), np.array([0.28, 0.28, 0.22]))
    obj = PrismObject(
        "box",
        (0.10, 0.05, 0.06),
        Pose6(np.array([0.03, -0.02, 0.0]), quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.3)),
    )
    return Scene((obj,), ws, seed=0)


@pytest.fixture(scope="session")
def t_scene():
    """A single T-shape at the origin with identity yaw."""
    ws = Workspace(np.array([-0.28, -0.28, 0.0]), np.array([0.28, 0.28, 0.22]))
    obj = PrismObject("t_shape", (0.12, 0.04, 0.08, 0.04, 0.05), Pose6.identity())
    return Scene((obj,), ws, seed=0)
