import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from multilight import Camera, MaterialField, MaterialSample, light_rig_default, sphere_scene  # noqa: E402
from multilight.render import raycast_gbuffer, render_multilight  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


def lambert_sphere(res=32, albedo=(0.6, 0.4, 0.2)):
    mat = MaterialField("constant", MaterialSample(albedo, 1.0, 0.0))
    return sphere_scene(1.0, mat), Camera(width=res, height=res)


@pytest.fixture(scope="session")
def small_sphere():
    """A 24x24 Lambertian sphere rendered under the default rig."""
    scene, cam = lambert_sphere(24)
    rig = light_rig_default()
    gt = raycast_gbuffer(scene, cam)
    mls = render_multilight(scene, cam, rig, gbuffer=gt)
    return scene, cam, rig, gt, mls


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
