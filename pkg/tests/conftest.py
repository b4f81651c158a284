import numpy as np
import pytest

from cmmexplore.scene import ObjectSpec, PointCloud, SceneConfig, TableSpec

# one line per acceptance criterion, printed at the end of the session
CRITERIA = {}


def record_criterion(number: int, passed: bool, detail: str):
    CRITERIA[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_scene():
    return SceneConfig(
        table=TableSpec((0.5, 0.5), (0.8, 0.55, 0.25)),
        objects=[ObjectSpec("sphere", (0.12,), (0.1, 0.2, 0.9), name="ball"),
                 ObjectSpec("box", (0.12, 0.08, 0.08), (0.9, 0.1, 0.1), name="brick")],
        sampling_density=2500.0,
    )


def random_cloud(rng, n, scale=0.1):
    pos = rng.normal(size=(n, 3)) * scale
    nrm = rng.normal(size=(n, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return PointCloud(pos, rng.random((n, 3)), nrm)
