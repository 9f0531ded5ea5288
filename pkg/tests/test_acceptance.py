"""Acceptance battery: every check must pass at its stated tolerance.

Each test runs one check from cmdplab.acceptance and prints its summary
line, so `pytest -v` doubles as the release gate report.
"""

import pytest

from cmdplab.acceptance import ALL_CHECKS


@pytest.mark.parametrize(
    "check", ALL_CHECKS,
    ids=[fn.__name__.removeprefix("check_") for fn in ALL_CHECKS])
def test_acceptance(check):
    result = check()
    print(result.line())
    assert result.passed, f"{result.name}: {result.detail}"
