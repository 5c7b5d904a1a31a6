"""End-to-end acceptance criteria 1-10, one test each.

Every test prints a single ``criterion N PASS/FAIL`` line; the lines are
also collected and shown in the terminal summary.
"""

import pytest

from ewlab import acceptance as acc

SEED = 0
LINES = {}


@pytest.fixture(scope="module")
def suite():
    return {c.number: c for c in acc.run_suite(SEED)}


def _report(c):
    LINES[c.number] = c.line()
    print(c.line())
    assert c.passed, c.line()


@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(suite, number):
    _report(suite[number])


def test_criterion_10_determinism(suite):
    first = acc.suite_json([suite[n] for n in range(1, 10)], SEED)
    _report(acc.criterion_10(first, SEED))
