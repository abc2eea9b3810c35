import numpy as np
import pytest

from asaga.dataset import make_synthetic
from asaga.objective import Objective
from asaga.serial import reference_optimum


@pytest.fixture(scope="session")
def small_obj():
    return Objective.from_dataset(make_synthetic(300, 40, 5, seed=1))


@pytest.fixture(scope="session")
def small_opt(small_obj):
    return reference_optimum(small_obj)


@pytest.fixture(scope="session")
def dense_obj():
    rng = np.random.default_rng(7)
    from asaga.dataset import SparseDataset
    X = rng.standard_normal((120, 8))
    y = np.where(rng.random(120) < 0.5, -1.0, 1.0)
    return Objective.from_dataset(SparseDataset.from_dense(X, y))
