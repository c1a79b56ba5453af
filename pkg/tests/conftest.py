import math

import numpy as np
import pytest

from sagp.component import ComponentState
from sagp.kernel import Box

# one line per acceptance check, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_kernel(A, B, log_rho, eta, box=None):
    """Entrywise loop oracle for the supported Gaussian kernel."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    out = np.zeros((len(A), len(B)))
    for i, a in enumerate(A):
        for k, b in enumerate(B):
            if box is not None and not (box.contains(a) and box.contains(b)):
                continue
            out[i, k] = math.exp(log_rho * float(np.sum((a - b) ** 2))) / eta
    return out


def random_state(rng, n, m, d=1, box=None, eta=None, log_rho=None, cid=0):
    """Random training inputs in ``box`` plus a component with ``m`` pseudo-inputs."""
    box = Box.unit(d) if box is None else box
    lo = np.asarray(box.lower)
    hi = np.asarray(box.upper)
    X = lo + (hi - lo) * rng.uniform(0.02, 1.0, size=(n, d))
    idx = np.sort(rng.choice(n, size=m, replace=False))
    st = ComponentState(
        component_id=cid,
        box=box,
        pseudo_idx=idx,
        pseudo_targets=rng.normal(size=m),
        eta=float(rng.uniform(0.5, 3.0)) if eta is None else eta,
        log_rho=float(-rng.uniform(0.5, 5.0)) if log_rho is None else log_rho,
    )
    return X, st


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
