import numpy as np
import pytest

from perspose.body import default_mapping, default_tree


@pytest.fixture(scope="session")
def tree():
    return default_tree()


@pytest.fixture(scope="session")
def mapping():
    return default_mapping()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng):
    v = rng.normal(size=3)
    v = v / np.linalg.norm(v) * rng.uniform(0.1, np.pi - 0.1)
    from perspose.geometry import axis_angle_to_matrix

    return axis_angle_to_matrix(v)
