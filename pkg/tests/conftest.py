import numpy as np
import pytest

from causalglm import gen_fig1, gen_fig3
from causalglm.data import Dataset


@pytest.fixture(scope="session")
def fig1_large():
    return gen_fig1(100_000, seed=1)


@pytest.fixture(scope="session")
def fig3_1000():
    return gen_fig3(1000, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_dataset(X, y, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"X{j + 1}" for j in range(X.shape[1]))
    return Dataset(X=X, y=y, names=names)
