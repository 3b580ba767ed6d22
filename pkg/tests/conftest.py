import numpy as np
import pytest

from articap import kernels
from articap.synth import generate_assets

BACKENDS = sorted(kernels.BACKENDS)


@pytest.fixture(scope="session")
def assets():
    return generate_assets(seed=3, object_kind="box-hinge", resolution=6)


@pytest.fixture(scope="session")
def hand(assets):
    return assets.right


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_rotvec(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0.0, max_angle)


# -- acceptance reporting -----------------------------------------------------

ACCEPTANCE = {}


def record(number, ok, detail):
    """Remember a criterion outcome; echoed now and again in the terminal summary."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
