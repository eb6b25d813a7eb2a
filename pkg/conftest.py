import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from packages.submodular.oracles import ConcaveCardinality, Cut, Modular, Sum  # noqa: E402


def random_model(rng: np.random.Generator, n: int, hops: int = 2, edge_prob: float = 0.5) -> Sum:
    """Modular + random cut + a few concave-of-cardinality terms on random regions."""
    edges = [(u, v, float(rng.uniform(0.0, 2.0))) for u in range(n) for v in range(u + 1, n) if rng.random() < edge_prob]
    terms = [(Modular(rng.normal(0.0, 2.0, n)), None)]
    if edges:
        terms.append((Cut(n, edges), None))
    for _ in range(hops):
        k = int(rng.integers(2, n + 1))
        region = np.sort(rng.choice(n, size=k, replace=False))
        terms.append((ConcaveCardinality(k, range(k), float(rng.uniform(0.0, 3.0))), region))
    return Sum(n, terms)


def grid_factors(rows: int, cols: int, rng: np.random.Generator, block: int = 0, hop_scale: float = 0.5):
    """Grid cut model as (oracle, support) factors: unaries, one factor per edge, optional block HOPs."""
    n = rows * cols
    index = np.arange(n).reshape(rows, cols)
    factors = [(Modular(rng.normal(0.0, 1.0, n)), np.arange(n))]
    pairs = list(zip(index[:, :-1].ravel(), index[:, 1:].ravel())) + list(zip(index[:-1, :].ravel(), index[1:, :].ravel()))
    for u, v in pairs:
        factors.append((Cut(2, [(0, 1, float(rng.uniform(0.2, 1.0)))]), np.array([u, v])))
    if block:
        for r in range(0, rows, block):
            for c in range(0, cols, block):
                region = index[r:r + block, c:c + block].ravel()
                if region.size > 1:
                    factors.append((ConcaveCardinality(region.size, range(region.size), hop_scale), region))
    return factors


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def two_node_cut():
    return Cut(2, [(0, 1, 1.0)])
