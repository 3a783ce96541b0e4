import logging

import numpy as np
import pytest

from asimm.events import Dataset, EventTimes


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging.getLogger("asimm").setLevel(logging.ERROR)
    yield


def random_dataset(rng, n=6, R=3, M=2, T=2.5, mean=30):
    """Homogeneous-Poisson events with uniform stimulus onsets."""
    events = []
    for _ in range(n):
        row = []
        for _ in range(R):
            c = rng.poisson(mean)
            row.append(EventTimes(np.sort(rng.uniform(0, T, c)), T))
        events.append(tuple(row))
    shifts = rng.uniform(0, T / 2, size=(R, M))
    return Dataset(tuple(events), shifts, T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_params(rng, n, M, K, ell0, T, z=None):
    """Random conjugate-symmetric parameters satisfying the DC constraint."""
    from asimm.centering import dc_constraint, update_baseline
    from asimm.model import ModelParams

    phi = np.zeros((K, M, 2 * ell0 + 1), dtype=complex)
    pos = (rng.normal(size=(K, M, ell0)) + 1j * rng.normal(size=(K, M, ell0))) * 0.05
    phi[..., ell0 + 1:] = pos
    phi[..., :ell0] = np.conj(pos[..., ::-1])
    phi[..., ell0] = dc_constraint(pos)
    if z is None:
        z = np.arange(n) % K
    return ModelParams(z, update_baseline(phi, T), phi, rng.uniform(0, T / 8, size=(n, M)),
                       rng.uniform(20, 60, size=K), T)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
