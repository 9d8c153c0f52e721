import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=40)
settings.load_profile("suite")


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    # compile (or load from disk cache) every jit kernel once so timing
    # assertions elsewhere never measure compilation
    from cellws import _kernels

    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    emit = report.when == "call" or (report.when == "setup" and not report.passed)
    if not emit:
        return
    if report.passed:
        status = "PASS"
    elif report.skipped:
        status = "SKIP"
    else:
        status = "FAIL"
    name = report.nodeid.split("::", 1)[1]
    print(f"\n[acceptance] {name}: {status}", flush=True)
