import numpy as np
import pytest

from data import DatasetSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def three_blobs():
    """Three well separated 2-D classes, 60 rows each"""
    spec = DatasetSpec("gaussian-mixture", {"means": [[0, 0], [6, 0], [3, 5]], "scale": 1.0}, seed=7)
    return generate(spec, 60)


@pytest.fixture(scope="session")
def toy_task():
    """Three unit-scale 2-D classes with means about 4 apart: 500 train and 500 test rows each"""
    spec = DatasetSpec("gaussian-mixture", {"means": [[0, 0], [4, 0], [2, 3.5]], "scale": 1.0}, seed=0)
    return generate(spec, 500), generate(spec.with_seed(1), 500)
