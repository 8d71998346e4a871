"""
Общие фикстуры: игрушечные графы, случайные графы, SBM, каталог данных
"""
import os
import tempfile
from pathlib import Path

os.environ.setdefault("LAZYGNN_DATA_DIR", tempfile.mkdtemp(prefix="lazygnn-test-"))

import numpy as np
import pytest

from shared.graph import build_graph, normalize
from shared.models import SbmSpec, TrainConfig
from shared.sbm import generate_sbm, random_graph

FIXTURES_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy3_dir() -> Path:
    return FIXTURES_DIR / "toy3"


@pytest.fixture
def two_node_graph():
    """Ã = [[.5, .5], [.5, .5]] (ребро 0-1 с петлями)"""
    return normalize(build_graph([(0, 1)], 2))


@pytest.fixture
def path3_graph():
    return normalize(build_graph([(0, 1), (1, 2)], 3))


@pytest.fixture
def random_graph_factory():
    def make(n: int = 40, p: float = 0.1, seed: int = 0):
        return random_graph(n, p, seed=seed)
    return make


@pytest.fixture
def small_sbm():
    """3 блока по 30 узлов"""
    spec = SbmSpec(
        blocks=3, nodes_per_block=30, p_in=0.2, p_out=0.02,
        feature_dim=6, feature_noise_sigma=0.5, seed=7,
    )
    return generate_sbm(spec)


@pytest.fixture
def fast_cfg():
    return TrainConfig(epochs=5, hidden=8, dropout=0.0, lr=0.01, seed=3)
