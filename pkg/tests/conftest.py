import numpy as np
import pytest

from quadcircle.forms import diagonal_form, split_form

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end of the run
_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def rec(num: int, ok: bool, detail: str) -> bool:
        _CRITERIA[num] = (bool(ok), detail)
        print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return rec


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def F4():
    return split_form(4)


@pytest.fixture(scope="session")
def F6():
    return split_form(6)


@pytest.fixture(scope="session")
def sphere4():
    return diagonal_form([2, 2, 2, 2], name="sphere4")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
