import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blockcert.block_core import normalize_columns

settings.register_profile(
    "blockcert", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("blockcert")


def gaussian(m, n, p, seed=0, normalize=True):
    A = np.random.default_rng(seed).standard_normal((m, n * p))
    return normalize_columns(A) if normalize else A


def block_sparse(n, p, k, rng, scale=1.0):
    x = np.zeros(n * p)
    for i in rng.choice(p, size=k, replace=False):
        x[i * n:(i + 1) * n] = scale * rng.standard_normal(n)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
