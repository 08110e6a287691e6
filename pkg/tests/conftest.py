import numpy as np
import pytest

from ocdm_cfo import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def base_cfg():
    return SystemConfig(N=16, K=12, L=2)


def random_taps(rng, L):
    return (rng.standard_normal(L + 1) + 1j * rng.standard_normal(L + 1)) / np.sqrt(2 * (L + 1))


ACCEPTANCE = []


def record(number, title, ok, detail):
    """Log one acceptance criterion outcome for the end-of-run summary."""
    ACCEPTANCE.append(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
