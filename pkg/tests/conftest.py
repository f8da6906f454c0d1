import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance bookkeeping: one PASS/FAIL line per criterion

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record a (possibly partial) verdict for an acceptance criterion, then assert it."""

    def record(n: int, ok: bool, detail: str):
        _CRITERIA.setdefault(n, []).append((bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, f"criterion {n}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        parts = _CRITERIA[n]
        ok = all(p[0] for p in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: " + "; ".join(p[1] for p in parts))
