import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from narrowfront.channel import GeneratorParams, flat_shape, sample_channel

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def shape7():
    return sample_channel(GeneratorParams(), 7, 400)


@pytest.fixture(scope="session")
def flat():
    return flat_shape(400)


@pytest.fixture(scope="session")
def rect_params():
    return GeneratorParams(L_lo=1.0, L_hi=2.0, A1=0.5, wing_len_lo=0.2, amplitude=0.0,
                           trig_degree=0, rectangular_mode=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
