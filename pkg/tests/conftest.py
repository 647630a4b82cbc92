import os

import pytest

from slangdef import kernels


def pytest_configure(config):
    # slow tests opt in via RUN_SLOW=1 as well as -m slow
    if os.environ.get("RUN_SLOW") == "1":
        config.option.markexpr = ""


@pytest.fixture
def each_backend(request):
    """Parametrized fixture that runs a test under both kernel backends."""
    name = request.param
    previous = kernels.active_name()
    kernels.use(name)
    yield name
    kernels.use(previous)


def pytest_generate_tests(metafunc):
    if "each_backend" in metafunc.fixturenames:
        metafunc.parametrize("each_backend", ["numpy", "numba"], indirect=True)
