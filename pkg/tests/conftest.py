import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng, n=None):
    from liesrnn.geometry import exp_so3

    shape = (3,) if n is None else (n, 3)
    w = rng.standard_normal(shape)
    w *= rng.uniform(0.0, np.pi, size=shape[:-1] + (1,)) / np.linalg.norm(w, axis=-1, keepdims=True)
    return exp_so3(w)
