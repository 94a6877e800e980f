import pytest

from systune import workload
from systune.perf_model import DEVICE_PRESETS


@pytest.fixture(scope="session")
def u250():
    return DEVICE_PRESETS["u250-like"]


@pytest.fixture(scope="session")
def small_test():
    return DEVICE_PRESETS["small-test"]


@pytest.fixture(scope="session")
def mm64():
    return workload.make_mm(64, 64, 64)


@pytest.fixture(scope="session")
def mm1024():
    return workload.make_mm(1024, 1024, 1024)


@pytest.fixture(scope="session")
def cnn16():
    return workload.make_cnn(16, 16, 16, 16, 3, 3)
