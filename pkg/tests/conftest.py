import numpy as np
import pytest

from lowmach.verification import random_field, random_vector


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def rand_field():
    return random_field


@pytest.fixture
def rand_vector():
    return random_vector


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance"):
            lines = getattr(mod, "VERDICTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
