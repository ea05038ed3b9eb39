import numpy as np
import pytest

from bbmmed.core import NetworkModel

# printed influence matrices; rows 0 of W and 1 of U do not sum to one
RAW_W = [[0.2, 0.3, 0.2], [0.7, 0.2, 0.1], [0.1, 0.1, 0.8]]
RAW_U = [[0.8, 0.2], [0.2, 0.2], [0.2, 0.8]]
O0 = [0.2, 0.2, 0.8]

# acceptance criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def paper_net():
    return NetworkModel.build(RAW_W, RAW_U, 0.3, renormalize=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
