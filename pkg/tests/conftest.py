import numpy as np
import pytest

from poseforge.se3 import RigidTransform, random_rotation


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_transform(rng, scale=1.0):
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))


# acceptance criteria record (number, passed, detail) here; printed after the run
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
