import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def all_assignments(n: int) -> np.ndarray:
    """Every 0/1 vector of width n, one per row."""
    return np.array(list(itertools.product([False, True], repeat=n)), dtype=bool).reshape(-1, n)


@pytest.fixture(scope="session")
def lights3():
    from dsama.dataset import make_lights_out
    return make_lights_out(3)


@pytest.fixture(scope="session")
def lights3_data(lights3):
    from dsama.dataset import sample_transitions, split
    ds = sample_transitions(lights3, 2000, seed=0)
    return split(ds, 0.9, seed=0)


ACCEPTANCE: dict = {}


def record(n: int, ok: bool, detail: str = "") -> None:
    """Note an acceptance outcome and print its line."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}" + (f": {detail}" if detail else "")
    ACCEPTANCE.setdefault(n, []).append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        for line in ACCEPTANCE[n]:
            terminalreporter.write_line(line)
