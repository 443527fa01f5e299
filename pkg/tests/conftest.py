import numpy as np
import pytest
from hypothesis import settings

from olsofu.harness import Scenario, pretrain
from olsofu.models import TrainConfig
from olsofu.synthdata import DataSpec, default_means, default_pattern

settings.register_profile("repeatable", deadline=None, derandomize=True)
settings.load_profile("repeatable")


@pytest.fixture(scope="session")
def small_scenario() -> Scenario:
    """A cheap but realistic 4-class scenario shared across test modules."""
    data = DataSpec(
        k=4,
        d=8,
        class_means=default_means(4, 8, 2.0),
        class_cov_scale=1.0,
        n_train=1200,
        n_test_pool=1200,
    )
    return Scenario(
        data=data,
        shift=default_pattern("sinusoidal", 4, 150),
        train_cfg=TrainConfig(epochs=20),
    )


@pytest.fixture(scope="session")
def small_pretrained(small_scenario):
    return pretrain(small_scenario)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
