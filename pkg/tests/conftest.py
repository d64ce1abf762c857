from pathlib import Path

import numpy as np
import pytest

from magsim import MaterialParams, mesh_io

DATA = Path(__file__).parent / "data"
MODELS = Path(__file__).parents[1] / "models"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def models_dir():
    return MODELS


@pytest.fixture
def unit_tet():
    nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                      [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return mesh_io.make_tet_mesh(nodes, np.array([[0, 1, 2, 3]]))


@pytest.fixture
def rubber():
    return MaterialParams(young_modulus=1e5, poisson_ratio=0.3,
                          density=1200.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_valid_tet(rng, scale=1.0, min_volume=1e-3):
    """Random well-shaped single-tet mesh (positive volume bounded away
    from zero so derived quantities stay well-conditioned)."""
    while True:
        nodes = rng.uniform(-scale, scale, size=(4, 3))
        vol = mesh_io.tet_volumes(nodes, np.array([[0, 1, 2, 3]]))[0]
        if abs(vol) > min_volume * scale ** 3:
            return mesh_io.make_tet_mesh(nodes, np.array([[0, 1, 2, 3]]))
