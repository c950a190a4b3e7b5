import numpy as np
import pytest

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records a verdict line and fails the test when ``ok`` is false."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def emit(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return emit
