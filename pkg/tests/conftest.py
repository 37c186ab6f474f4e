import numpy as np
import pytest

from slepian_osg.pipeline import make_truth, synthetic_region
from slepian_osg.slepian import slepian_basis


@pytest.fixture(scope="session")
def region():
    return synthetic_region()


@pytest.fixture(scope="session")
def basis(region):
    return slepian_basis(region, 40, A=10)


@pytest.fixture(scope="session")
def small_basis(region):
    return slepian_basis(region, 24, A=4)


@pytest.fixture(scope="session")
def truth(basis):
    return make_truth(basis, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_results = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the line is printed in the run summary."""
    lines = request.config.stash.setdefault(_results, [])

    def record(number, ok, detail):
        status = "PASS" if ok else "FAIL"
        lines.append(f"criterion {number:>2}: {status}  {detail}")
        print(lines[-1])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_results, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
