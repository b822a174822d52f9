import sys

import numpy as np
import pytest

from gatedattn.numerics import Rng


@pytest.fixture
def rng():
    return Rng(1234)


def rand_matrix(seed, shape, std=1.0):
    return Rng(seed, ("test-matrix",)).normal(std, shape)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
