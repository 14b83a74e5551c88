import numpy as np
import pytest

from icx.instance import comparison_instance, stack_system

ACCEPTANCE_LINES = []

# Printed fit matrix from the four-user comparison example (7 significant digits).
PRINTED_FIT = np.array([
    [1, -0.9122099, -1.0733032, 0],
    [-1.0962388, 1, 1.1765966, 0],
    [0, 0.8499089, 1, -1.0952999],
    [-0.8506375, 0, 0, 1],
])
PRINTED_CODE = PRINTED_FIT[[0, 3]]
PRINTED_AWARE_CODE = np.array([[0, -0.3936923, 0.2644723, -0.1412844]])
EXAMPLE_X = np.array([1.0, 1.0, -1.0, 2.0])


@pytest.fixture
def example_instance():
    return comparison_instance()


@pytest.fixture
def example_system(example_instance):
    return stack_system(example_instance)


@pytest.fixture
def example_unaware_system(example_instance):
    return stack_system(example_instance.unaware())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
