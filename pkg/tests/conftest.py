import numpy as np
import pytest

from survnie import AnalysisConfig, Dataset

SERIAL = AnalysisConfig(threads=1)


@pytest.fixture
def serial_config():
    return SERIAL


def toy_censored_dataset(n=60, p=3, seed=0, censor_rate=0.12, signal=0.25):
    """Small censored dataset with one active mediator (index 0)."""
    rng = np.random.default_rng(seed)
    a = (rng.random(n) < 0.5).astype(int)
    while a.sum() in (0, n):
        a = (rng.random(n) < 0.5).astype(int)
    b = rng.standard_normal((n, p))
    b[:, 0] += 0.8 * a
    t = 0.3 * a + signal * b[:, 0] + rng.standard_normal(n)
    c = np.log(rng.standard_exponential(n) / censor_rate) if censor_rate > 0 else np.full(n, np.inf)
    x = np.minimum(t, c)
    delta = (t <= c).astype(int)
    return Dataset(x=x, delta=delta, a=a, b=b)


@pytest.fixture
def toy_dataset():
    return toy_censored_dataset()


@pytest.fixture
def toy_dataset_uncensored():
    return toy_censored_dataset(censor_rate=0.0)
