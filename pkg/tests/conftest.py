import pytest

from cantorbush import DigitSet, build_self_similar


@pytest.fixture(scope="session")
def tree7():
    """N=7, S={1,2,4}, depth 3."""
    return build_self_similar(DigitSet(7, (1, 2, 4)), J=3)


@pytest.fixture(scope="session")
def kernels7(tree7):
    """Localized kernels at the first node of levels 1 and 2, with main parts at eps=0.3.

    Each costs about 20 s; the operator tests and the acceptance suite share them.
    """
    from cantorbush.operators import truncate_main

    return {j: truncate_main(j, tree7.numerators(j)[0], 0.3, 1, tree7) for j in (1, 2)}


_CRITERIA = {}


@pytest.fixture
def criterion():
    """``criterion(n, passed, detail)`` records one acceptance line; returns ``passed``."""

    def record(n, passed, detail):
        _CRITERIA[n] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
