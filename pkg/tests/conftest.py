import numpy as np
import pytest

from dpsra.cell import build_cell
from dpsra.channel import fading_pdf
from dpsra.config import ScenarioConfig

TABLE_ALPHA = 15.3
TABLE_BETA = 37.6
TABLE_SIGMA_S = np.sqrt(8.0)


@pytest.fixture(scope="session")
def small_config():
    return ScenarioConfig(n_users=2000, groups_per_cluster=125)


@pytest.fixture(scope="session")
def small_cell(small_config):
    return build_cell(small_config, seed=7)


@pytest.fixture(scope="session")
def outer_ring_pdf():
    return fading_pdf((750.0, 1000.0), TABLE_ALPHA, TABLE_BETA, TABLE_SIGMA_S)
