import numpy as np
import pytest
from hypothesis import strategies as st

from occutest.model import RegionDesign

STANDARD_DESIGNS = (RegionDesign(50, 3), RegionDesign(50, 3))

probs = st.floats(0.05, 0.95)


@st.composite
def region_counts(draw, N=50, K=3, interior=True):
    """(s_d, d) possible under (N, K); interior keeps the per-region MLE off the boundary."""
    if interior:
        s = draw(st.integers(2, N - 1))
        d = draw(st.integers(s + 1, s * K - 1))
    else:
        s = draw(st.integers(0, N))
        d = draw(st.integers(s, s * K))
    return s, d


@st.composite
def two_region_counts(draw, N1=50, N2=50, K=3):
    return (*draw(region_counts(N1, K)), *draw(region_counts(N2, K)))


@pytest.fixture
def designs():
    return STANDARD_DESIGNS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the test run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
