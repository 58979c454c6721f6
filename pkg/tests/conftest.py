import math

import numpy as np
import pytest
from hypothesis import settings

from boxfinder.compatibility import CompatibilityMatrix
from boxfinder.search.trace import SearchTrace

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


class StubObjective:
    """Counting objective over a lookup table of frozensets."""

    def __init__(self, n, table, default=10.0, empty=20.0):
        self.n = n
        self.table = {frozenset(k): v for k, v in table.items()}
        self.default = default
        self.empty = empty
        self.n_evals = 0
        self.calls = []

    def __len__(self):
        return self.n

    def __call__(self, ids):
        self.n_evals += 1
        key = frozenset(int(i) for i in ids)
        self.calls.append(key)
        if not key:
            return self.empty
        return self.table.get(key, self.default)


def all_compatible(n):
    bits = np.ones((n, n), dtype=bool)
    np.fill_diagonal(bits, False)
    return CompatibilityMatrix(bits, 0.1, 0, 0)


def compat_from_conflicts(n, conflicts):
    bits = np.ones((n, n), dtype=bool)
    np.fill_diagonal(bits, False)
    for i, j in conflicts:
        bits[i, j] = bits[j, i] = False
    return CompatibilityMatrix(bits, 0.1, 0, 0)


def trace_from(best):
    t = SearchTrace("x")
    for b in best:
        t.add(b, b, 1)
    return t


@pytest.fixture
def stub():
    return StubObjective


def rot(axis, deg):
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    if axis == "z":
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
