import sys

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from wristkit import _backend
from wristkit.kinematics import DexWristModel, RobotModel, load_robot


def random_rotations(n, seed=0):
    return Rotation.random(n, random_state=seed).as_matrix()


@pytest.fixture(scope="session")
def agilex_dex():
    return load_robot("agilex_dexwrist")


@pytest.fixture(scope="session")
def agilex_serial():
    return load_robot("agilex_serial")


@pytest.fixture(scope="session")
def wrist_only():
    """Bare parallel wrist with a 0.1 m tool along the home platform normal."""
    from wristkit.geom import Pose

    return RobotModel("wrist_only", (), DexWristModel(), tool=Pose.from_translation([0, 0, 0.1]))


@pytest.fixture(params=_backend.available())
def kernels(request):
    return _backend.get(request.param)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)
