"""Acceptance gate: one printed PASS/FAIL line per criterion."""

import pytest

from relaykey import validation

LINES = []
LIMITS = {1: 1.0, 2: 1.0, 3: 30.0, 4: 120.0, 5: 5.0, 6: 120.0, 8: 180.0, 9: 300.0}


@pytest.mark.parametrize("check", validation.CHECKS, ids=lambda c: c.__name__)
def test_criterion(check):
    result = check()
    limit = LIMITS.get(result.number)
    within = limit is None or result.runtime < limit
    line = result.line()
    if not within:
        line += f" [runtime limit {limit:g} s exceeded]"
    print("\n" + line)
    LINES.append(line)
    assert result.passed, line
    assert within, line
