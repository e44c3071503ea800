import numpy as np
import pytest

from leachclust.core import MaskedDataset
from leachclust.harness import SyntheticSpec, apply_mcar, gen_synthetic

_criteria = {}


@pytest.fixture
def small_masked():
    """3 clusters x 20 instances in 6 dimensions, 30% hidden."""
    ds = gen_synthetic(SyntheticSpec(c=3, d=6, n_per_cluster=20, separation=6.0, seed=11))
    return apply_mcar(ds, 0.3, seed=5)


@pytest.fixture
def small_complete():
    return gen_synthetic(SyntheticSpec(c=3, d=6, n_per_cluster=20, separation=6.0, seed=11))


@pytest.fixture
def make_masked():
    def build(X, L):
        X = np.asarray(X, dtype=float)
        L = np.asarray(L)
        return MaskedDataset(np.where(L == 1, X, 0.0), L, truth=X)

    return build


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[crit] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_criteria):
        outcome, secs = _criteria[crit]
        flag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {crit}: {flag} ({secs:.2f} s)")
