import numpy as np
import pytest

# criterion number -> (title, passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}
N_CRITERIA = 11


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def verdict():
    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE[number] = (title, bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in ACCEPTANCE:
            title, ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{n:2d}] {title}: {detail}")
        else:
            terminalreporter.write_line(f"---- [{n:2d}] not run or raised before reporting")
