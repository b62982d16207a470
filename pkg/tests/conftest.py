import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(n_per: int, centers, sigma: float = 1.0, seed: int = 0):
    """Isotropic Gaussian blobs with their generating labels."""
    centers = np.asarray(centers, dtype=float)
    r = np.random.default_rng(seed)
    X = np.concatenate([c + sigma * r.normal(size=(n_per, centers.shape[1])) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.report_lines():
        terminalreporter.write_line(line)
