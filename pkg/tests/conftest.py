"""Test Configuration."""

import numpy as np
import pytest

from szego_lab.corpus import random_generic
from szego_lab.symbol import resolve_truncation
from tests.settings import SEED


@pytest.fixture(scope="session")
def generic_v4():
    """A generic symbol of class V(4), drawn once per session."""
    return resolve_truncation(random_generic(4, np.random.default_rng(SEED)))


@pytest.fixture(scope="session")
def generic_v6():
    """A generic symbol of class V(6)."""
    return resolve_truncation(random_generic(6, np.random.default_rng(SEED)))
