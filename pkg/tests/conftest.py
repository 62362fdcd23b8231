import numpy as np
import pytest

from manifold_atlas.chart import build_atlas
from manifold_atlas.manifold_gen import ManifoldSpec, sample_field, sample_manifold


@pytest.fixture(scope="session")
def helix_cloud():
    return sample_field(sample_manifold(ManifoldSpec("helix", n=2000, seed=1)), "trig:1")


@pytest.fixture(scope="session")
def circle_cloud():
    return sample_field(sample_manifold(ManifoldSpec("circle", n=2000, seed=2)), "coordinate-sum")


@pytest.fixture(scope="session")
def helix_atlas(helix_cloud):
    return build_atlas(helix_cloud, 1)


@pytest.fixture(scope="session")
def circle_atlas(circle_cloud):
    return build_atlas(circle_cloud, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def chebyshev_points(n, d, seed):
    """Samples of the product arcsine density on [-1, 1]^d."""
    u = np.random.default_rng(seed).uniform(0.0, np.pi, size=(n, d))
    return np.cos(u)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])
