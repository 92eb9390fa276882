import numpy as np
import pytest

from dygcl.config import ModelConfig
from dygcl.graph_core import SemanticFeatures
from helpers import random_sample
from pipeline.synthetic import SyntheticSpec, generate_synthetic


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="roda os testes marcados como slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="precisa de --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return ModelConfig.build(
        embedding_dim=8, local_hidden=4, global_hidden=4, mlp_hidden=4,
        pool_blocks=2, pool_ratio=0.5, dropout=0.0,
    )


@pytest.fixture
def small_sample(rng):
    return random_sample(rng)


@pytest.fixture
def small_features(rng, small_sample):
    return SemanticFeatures(rng.normal(size=(small_sample.num_nodes, 8)))


@pytest.fixture(scope="session")
def tiny_synthetic():
    """40 amostras, N=10, T=3: pequeno o bastante para treinar em segundos."""
    spec = SyntheticSpec.build(
        num_nodes=10, num_snapshots=3, embedding_dim=6, edge_prob=0.1,
        motif_size=4, num_samples=40, seed=3,
    )
    return generate_synthetic(spec)


@pytest.fixture
def tiny_config():
    return ModelConfig.build(
        embedding_dim=6, local_hidden=4, global_hidden=4, mlp_hidden=4,
        max_epochs=5, patience=50, batch_size=8, learning_rate=1e-2, dropout=0.1,
    )
