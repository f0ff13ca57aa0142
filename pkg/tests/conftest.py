import numpy as np
import pytest

from data.dataset import TEST, TRAIN, Dataset, GraphPair
from data.graph import DirectedGraph, new_graph
from data.synthetic import make_dataset
from models.model import ArchSpec
from train import TrainConfig


@pytest.fixture
def cycle3():
    return new_graph(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])


@pytest.fixture
def small_arch():
    return ArchSpec(n=6)


@pytest.fixture
def poisson_dataset():
    return make_dataset('poisson', 6, 10, 0.5, seed=3)


@pytest.fixture
def quick_cfg():
    return TrainConfig(epochs=2, batch_size=2, seed=11, noise_dim=2)


@pytest.fixture
def random_pairs():
    """Eight dense random pairs on six nodes, half train half test."""
    rng = np.random.default_rng(5)
    pairs = []
    for index in range(8):
        x = (rng.random((6, 6)) < 0.3).astype(float)
        y = np.maximum(x, (rng.random((6, 6)) < 0.3).astype(float))
        np.fill_diagonal(x, 0.0)
        np.fill_diagonal(y, 0.0)
        pairs.append(GraphPair(DirectedGraph(x), DirectedGraph(y), {'user': 'U%d' % (index % 2)}, str(index)))
    return Dataset(pairs, [TRAIN, TEST] * 4, None)
