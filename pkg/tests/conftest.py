import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from asap.attnio import build_stack


def random_stack(rng, n=None, layers=None, heads=None, feature_dim=4, noise=1.0):
    """Plain random row-stochastic stack built directly from Dirichlet rows."""
    n = n or int(rng.integers(4, 33))
    layers = layers or int(rng.integers(2, 9))
    heads = heads or int(rng.integers(1, 4))
    attn = rng.dirichlet(np.full(n, noise), size=(layers, heads, n))
    features = rng.standard_normal((layers, n, feature_dim))
    return build_stack(attn, features, {"generator": "test-random"})


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
