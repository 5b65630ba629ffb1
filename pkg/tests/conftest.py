import numpy as np
import pytest

from tensorbp import synthetic
from tensorbp.corpus import build_vocabulary

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Log one acceptance line; printed in the terminal summary."""

    def record(name, passed, detail=""):
        _CRITERIA.append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        status = {True: "PASS", False: "FAIL"}.get(passed, passed)
        terminalreporter.write_line(f"[{status}] {name}: {detail}")


@pytest.fixture(scope="session")
def small_corpus():
    return synthetic.make_corpus(120, seed=5, signal=0.3)


@pytest.fixture(scope="session")
def small_vocab(small_corpus):
    return build_vocabulary(small_corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
