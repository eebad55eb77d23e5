import pytest

from helpers import ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    missing = [k for k in range(1, 13) if k not in ACCEPTANCE]
    if missing:
        terminalreporter.write_line(f"not run: {missing}")


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(20240601)
