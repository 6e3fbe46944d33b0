"""Full-tolerance acceptance run; one pass/fail line per criterion.

Run alone with ``pytest -s tests/test_acceptance.py`` to see the lines live.
"""
import pytest

from narrowfront import acceptance


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    (res,) = acceptance.run([number])
    with capsys.disabled():
        print("\n" + res.line())
        for key, value in res.details.items():
            print(f"    {key}: {value}")
    assert res.passed, res.summary
