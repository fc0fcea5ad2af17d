import numpy as np
import pytest


def mc_se(x):
    """Standard error of the mean of independent draws."""
    x = np.asarray(x, dtype=float)
    return x.std(ddof=1) / np.sqrt(x.size)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.criterion_lines = []


@pytest.fixture
def criterion(request):
    """record(name, passed, detail) adds a PASS/FAIL line to the end-of-run summary."""
    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        request.config.criterion_lines.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if config.criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.criterion_lines:
            terminalreporter.write_line(line)
