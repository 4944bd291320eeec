import numpy as np
import pytest

from lazygumbel.model import Dataset, Query


def scalar_dataset(y):
    """One-dimensional rows equal to y, so theta = [1] gives scores y."""
    return Dataset(np.asarray(y, dtype=np.float64)[:, None]), Query([1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_gaussian():
    r = np.random.default_rng(7)
    x = r.standard_normal((300, 6))
    return Dataset(x / np.linalg.norm(x, axis=1, keepdims=True), unit_norm=True)
