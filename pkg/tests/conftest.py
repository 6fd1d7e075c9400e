import numpy as np
import pytest
import structlog

from ulrs.common.config import get_settings
from ulrs.dictionary import random_dictionary
from ulrs.types import Dictionary


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached per process; every test sees the current environment."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
    structlog.contextvars.clear_contextvars()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_dictionary() -> Dictionary:
    """a1 = (1, 0), a2 = (0, 1), a3 = (1, 1)/√2."""
    s = 1.0 / np.sqrt(2.0)
    return Dictionary(np.array([[1.0, 0.0, s], [0.0, 1.0, s]]))


@pytest.fixture
def small_dictionary() -> Dictionary:
    return random_dictionary(8, 12, seed=5)
