import numpy as np
import pytest

from saner_lab import Batch, ModelSpec


def random_batch(rng, spec: ModelSpec, m: int, noisy_frac: float = 0.3) -> Batch:
    x = rng.normal(size=(m, spec.input_dim))
    y = rng.integers(0, spec.num_classes, size=m)
    noisy = rng.random(m) < noisy_frac
    return Batch(x, y, noisy)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_spec():
    return ModelSpec((4, 6, 5, 3), "tanh")
