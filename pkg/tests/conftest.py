import os
import sys

import numpy as np
import pytest

from consensus_pose import _kernels
from consensus_pose.synth import NoiseModel, generate_scene

sys.path.insert(0, os.path.dirname(__file__))

BACKENDS = [b.NAME for b in _kernels.available_backends()]

ACCEPTANCE_RESULTS = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    return _kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noiseless_scene():
    return generate_scene(n_cameras=4, n_frames=100, n_joints=17, seed=3)


@pytest.fixture(scope="session")
def noisy_scene():
    return generate_scene(n_cameras=4, n_frames=100, n_joints=17, noise=NoiseModel(2.0, 20.0), seed=4)


@pytest.fixture
def record_criterion():
    def record(name, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_RESULTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
