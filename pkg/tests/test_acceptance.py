"""Acceptance suite: one parametrized case per criterion, each printing a pass/fail line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines, or ``cvmaser verify``.
"""

import pytest

from cvmaser.acceptance import CRITERIA, run_check


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"{c[0]:02d}-{c[1]}" for c in CRITERIA])
def test_criterion(number):
    result = run_check(number)
    print(result.line)
    assert result.passed, result.detail


def test_flipped_convention_is_caught():
    result = run_check(1, flip_convention=True)
    print(result.line)
    assert not result.passed
