import numpy as np
import pytest

from quadfault.quadsim import DomainConfig, FaultSpec, QuadParams


@pytest.fixture(scope="session")
def quad():
    return QuadParams()


@pytest.fixture(scope="session")
def source_domain():
    return DomainConfig(name="source")


@pytest.fixture(scope="session")
def healthy():
    return FaultSpec()


def make_toy_windows(n_per_class: int, channels: int = 7, window_len: int = 47,
                     seed: int = 0, shift: float = 3.0):
    """Synthetic linearly separable windows: class k raises channel k-1 by `shift`."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for label in range(1, 6):
        block = rng.normal(size=(n_per_class, channels, window_len)).astype(np.float32)
        block[:, label - 1, :] += shift
        X.append(block)
        y.extend([label] * n_per_class)
    return np.concatenate(X), np.array(y, dtype=np.int32)


@pytest.fixture(scope="session")
def toy_data():
    return make_toy_windows(20)
