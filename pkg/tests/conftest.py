import numpy as np
import pytest

from yamabe_cluster.bubble import Dim
from yamabe_cluster.constants import closed_form_constants


@pytest.fixture(scope="session")
def tables():
    """Constants tables for the dimensions exercised throughout the suite."""
    return {N: closed_form_constants(Dim(N)) for N in (7, 8, 9, 10)}


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
