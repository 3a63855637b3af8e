import numpy as np
import pytest

from minigl import graph
from minigl.sampler import SubgraphBatch


@pytest.fixture
def ring3():
    return graph.from_edges(3, [0, 1, 2], [1, 2, 0])


@pytest.fixture
def star4():
    # center 0 with leaves 1..3
    return graph.from_edges(4, [0, 0, 0], [1, 2, 3])


@pytest.fixture
def path4():
    return graph.from_edges(4, [0, 1, 2], [1, 2, 3])


@pytest.fixture(scope="session")
def powerlaw_10k():
    return graph.generate(graph.GraphGenSpec("power-law", 10_000, avg_degree=16, seed=7))


def batch_from_ids(ids):
    """Minimal SubgraphBatch carrying only a unique node set (for scheduling)."""
    ids = np.unique(np.asarray(ids, dtype=np.uint64))
    empty = np.empty(0, dtype=np.uint64)
    return SubgraphBatch(
        seeds=ids[:1],
        layers=[(empty, empty, np.empty(0, dtype=np.float32))],
        unique_nodes=ids,
    )
