import numpy as np
import pytest

from renewal_strings.catalog import Bounds, Catalog


def uniform_catalog(n, side=3.2e5, seed=0, pa=True):
    rng = np.random.default_rng(seed)
    b = Bounds(0.0, side, 0.0, side)
    x = rng.uniform(0, side, n)
    y = rng.uniform(0, side, n)
    a = rng.uniform(20, 80, n)
    kw = {}
    if pa:
        kw = dict(semi_major=a, semi_minor=a * 0.7, position_angle=rng.uniform(0, 180, n))
    return Catalog(ids=np.arange(n), x=x, y=y, bounds=b, labels=np.zeros(n, dtype=int), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
