import numpy as np
import pytest

from ipss_thresh.dataio import Dataset

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split(".")[0])):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def planted_regression():
    gen = np.random.default_rng(7)
    X = gen.normal(size=(120, 12))
    y = 2.0 * X[:, 0] + gen.normal(size=120)
    return Dataset.from_arrays(X, y, response_kind="continuous")
