import numpy as np
import pytest

from pkdcrowd import crypto_he as he


@pytest.fixture(scope="session")
def keys512():
    """3-of-5 threshold keys at the smallest supported size."""
    return he.keygen(512, 5, 3, np.random.default_rng(11))


@pytest.fixture(scope="session")
def keys1024():
    return he.keygen(1024, 3, 2, np.random.default_rng(1))


@pytest.fixture(scope="session")
def client512():
    return he.generate_keypair(512, np.random.default_rng(12))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
