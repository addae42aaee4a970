import os

import numpy as np
import pytest

from symcomp.ts import FiniteTransitionSystem

HERE = os.path.dirname(__file__)
CONFIG = os.path.join(HERE, "randnet.json")


def random_fts(rng, n, n_ext=2, n_int=1, density=0.3, outputs=None):
    """Random finite system with integer outputs; transitions drawn independently."""
    dense = rng.random((n, n_ext, n_int, n)) < density
    T = np.argwhere(dense)
    H = outputs if outputs is not None else rng.integers(0, 4, size=n).astype(float)
    int_values = np.zeros((1, 0)) if n_int == 1 else np.arange(n_int, dtype=float).reshape(-1, 1)
    return FiniteTransitionSystem(n, np.arange(n), T, np.asarray(H).reshape(-1, 1),
                                  np.arange(n_ext, dtype=float).reshape(-1, 1), int_values)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def traffic():
    """The traffic pipeline, synthesized once per session (a few minutes)."""
    from symcomp.pipelines import TrafficPipeline
    p = TrafficPipeline().abstract()
    p.synthesize()
    return p


@pytest.fixture(scope="session")
def microgrid4():
    from symcomp.pipelines import MicrogridPipeline
    p = MicrogridPipeline("4-unit").abstract()
    p.synthesize()
    return p
