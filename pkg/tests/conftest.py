import numpy as np
import pytest

from spinmem import kernels


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    mod = kernels.BACKENDS[request.param]
    monkeypatch.setattr(kernels, "free_evolve", mod.free_evolve)
    monkeypatch.setattr(kernels, "conjugate", mod.conjugate)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
