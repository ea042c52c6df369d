import os
from pathlib import Path

import numpy as np
import pytest

from deepksc.grassmann import SubspaceBasis

ACCEPTANCE_LINES = []

_CANDIDATE_ROOTS = [os.environ.get("KSCN_DATA_DIR"), "/root/data", str(Path(__file__).parents[1] / "data")]


def mnist_root():
    """First directory containing ``mnist/t10k-images-idx3-ubyte``, or None."""
    for root in filter(None, _CANDIDATE_ROOTS):
        if (Path(root) / "mnist" / "t10k-images-idx3-ubyte").exists():
            return root
    return None


@pytest.fixture(scope="session")
def mnist_dir():
    root = mnist_root()
    if root is None:
        pytest.skip("MNIST IDX files not found; set KSCN_DATA_DIR")
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def orthonormal(rng, d, p):
    q, r = np.linalg.qr(rng.standard_normal((d, p)))
    return q * np.sign(np.diag(r))


def basis(rng, d, p):
    return SubspaceBasis(orthonormal(rng, d, p))


@pytest.fixture
def detail(request):
    """List of strings shown next to the criterion's pass/fail line."""
    notes = []
    request.node.criterion_notes = notes
    return notes


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    number, title = mark.args
    notes = "; ".join(getattr(item, "criterion_notes", []))
    line = f"[{status}] criterion {number}: {title}" + (f" ({notes})" if notes else "")
    ACCEPTANCE_LINES.append((number, line))
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
