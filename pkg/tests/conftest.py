import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from geostream.geometry import Camera  # noqa: E402
from geostream.simulator import default_camera  # noqa: E402


@pytest.fixture
def cam():
    return default_camera()


@pytest.fixture
def toy_cam():
    # intrinsics used by the worked examples
    return Camera(fx=700.0, fy=700.0, cx=600.0, cy=180.0, width=1200, height=360)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
