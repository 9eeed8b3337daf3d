import numpy as np
import pytest
from hypothesis import settings

from hlgen.model import TransformerModel
from hlgen.weights import ModelConfig, seeded_init

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")

SMALL_CONFIG = ModelConfig(
    d_model=32,
    n_layers=2,
    n_heads=2,
    d_ff=64,
    max_seq=160,
    n_patches=16,
    n_queries=4,
)


@pytest.fixture(scope="session")
def small_config() -> ModelConfig:
    return SMALL_CONFIG


@pytest.fixture(scope="session")
def small_model(small_config) -> TransformerModel:
    return TransformerModel(small_config, seeded_init(small_config, 42))


def make_model(seed: int, config: ModelConfig = SMALL_CONFIG) -> TransformerModel:
    return TransformerModel(config, seeded_init(config, seed))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
