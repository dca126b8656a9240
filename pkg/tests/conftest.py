import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from markerhmm.hmm import CategoricalHmm

settings.register_profile(
    "invariants",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("invariants")

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def fix1():
    return CategoricalHmm(
        [[0.7, 0.3], [0.4, 0.6]],
        [[0.9, 0.1], [0.2, 0.8]],
        [0.6, 0.4],
        ("H0", "H1"),
        ("V0", "V1"),
    )


def random_hmm(rng, n, m):
    return CategoricalHmm(
        rng.dirichlet(np.ones(n), size=n),
        rng.dirichlet(np.ones(m), size=n),
        rng.dirichlet(np.ones(n)),
    )


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
