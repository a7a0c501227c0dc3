import numpy as np
import pytest

from bsbloch import verify


@pytest.fixture
def toy_a():
    """4-state basis, P = {0}, constant coupling 0.1 to state 1."""
    return verify.toy_a()


@pytest.fixture
def toy_b():
    """Single state, V(E) = 0.5/(E + 2); exact energy -1 + sqrt(1.5)."""
    return verify.toy_b()


@pytest.fixture
def toy_c():
    """Quasi-degenerate P = {0, 1} with constant couplings 0.1 into Q."""
    return verify.toy_c()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
