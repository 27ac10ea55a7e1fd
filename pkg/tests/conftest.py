import numpy as np
import pytest

from schrodinger_ot import DiscreteMeasure

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def canonical():
    """mu0 = uniform{0, 1}, mu1 = uniform{2, 3}."""
    return DiscreteMeasure.uniform([0.0, 1.0]), DiscreteMeasure.uniform([2.0, 3.0])


@pytest.fixture
def record():
    def _record(label: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
