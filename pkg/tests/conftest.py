import numpy as np
import pytest

from qchom.cutproj import TAU, ProjectionMatrix, hyperplane_projection

ACCEPTANCE_LINES: dict = {}


def record(number: int, ok: bool, detail: str):
    """Store one acceptance outcome; printed in the terminal summary."""
    ACCEPTANCE_LINES[number] = f"acceptance {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def R3x2():
    """y1 = x1, y2 = x2, y3 = sqrt2 x1 + sqrt3 x2: physical axes stay grid axes."""
    return ProjectionMatrix(np.array([[1.0, 0.0], [0.0, 1.0], [np.sqrt(2.0), np.sqrt(3.0)]]))


@pytest.fixture(scope="session")
def R4x3():
    return ProjectionMatrix(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
                                      [np.sqrt(2.0), np.sqrt(3.0), np.sqrt(5.0)]]))


@pytest.fixture(scope="session")
def R4x3_orth():
    return hyperplane_projection([1.0, np.sqrt(2.0), np.sqrt(3.0), TAU])
