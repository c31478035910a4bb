import numpy as np
import pytest

from isingbm.mock_server import MockAnnealerServer


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def mock_server():
    with MockAnnealerServer(beta=2.0, seed=11) as server:
        yield server
