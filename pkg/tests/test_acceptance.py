"""Top-level acceptance gate: seven numbered verification experiments.

Each test prints one pass/fail line; the assertion message lists any
sub-check that missed its tolerance, so a red run names the exact number
that moved.
"""

import pytest

from melnikov_lab import acceptance


@pytest.mark.parametrize(
    "index,criterion",
    list(enumerate(acceptance.CRITERIA, start=1)),
    ids=[f"criterion_{i}" for i in range(1, len(acceptance.CRITERIA) + 1)],
)
def test_criterion(index, criterion):
    result = criterion()
    line = (
        f"criterion {index} [{result.name}]: "
        f"{'PASS' if result.passed else 'FAIL'} ({result.elapsed_s:.2f}s)"
    )
    print(line)
    failing = {
        name: sub for name, sub in result.subchecks.items() if not sub["passed"]
    }
    assert result.passed, f"{line}; failing subchecks: {failing}"
