"""The twelve acceptance criteria, one test each, printing a PASS/FAIL line per criterion."""
import pytest

from hessian_lab.experiments import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = run_criterion(number)
    status = "PASS" if result.passed else "FAIL"
    print(f"\n{status} criterion {number}: {result.title}")
    for c in result.checks:
        print(f"    {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} {c.relation} {c.bound:.6g}"
              f" (tolerance {c.tolerance})")
    assert result.passed, [c.name for c in result.checks if not c.passed]
