import numpy as np
import pytest
from hypothesis import settings

from depthclip.geometry import PointCloud, normalize

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_cloud(rng, n=1024, name="rand"):
    return normalize(PointCloud(rng.standard_normal((n, 3)), name))


@pytest.fixture(scope="session")
def small_dataset():
    from depthclip.pipeline import generate_toy_dataset

    return generate_toy_dataset(seed=3, classes=8, per_class=12, test_per_class=4)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
