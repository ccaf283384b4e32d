import numpy as np
import pytest

from chaospricer import PathBatch, TimeGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid4():
    return TimeGrid.regular(1.0, 4)


def make_batch(rng, paths=512, steps=4, dim=1, payoff=None):
    """Small PathBatch with Gaussian increments and an optional payoff."""
    inc = rng.standard_normal((paths, steps, dim))
    if payoff is None:
        payoff = np.zeros((paths, steps + 1))
    return PathBatch(increments=inc, payoffs=payoff,
                     date_map=np.arange(steps + 1))


@pytest.fixture
def batch_factory(rng):
    def build(**kw):
        return make_batch(rng, **kw)
    return build
