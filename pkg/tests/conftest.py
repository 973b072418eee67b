import numpy as np
import pytest

from citl.dfc import SubjectTimeSeries

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def planted_series(rng, T, R, block, strength=0.9):
    """White noise with the ``block`` regions sharing one latent factor."""
    x = rng.standard_normal((T, R))
    latent = rng.standard_normal((T, 1))
    x[:, block] = strength * latent + np.sqrt(1 - strength**2) * rng.standard_normal((T, len(block)))
    return x


@pytest.fixture
def tiny_cohort():
    """12 + 12 subjects, R=8, T=50; patients carry a planted block throughout."""
    rng = np.random.default_rng(7)
    subjects = []
    for i in range(24):
        label = int(i >= 12)
        x = planted_series(rng, 50, 8, [0, 1, 2, 3]) if label else rng.standard_normal((50, 8))
        subjects.append(SubjectTimeSeries(f"s{i:02d}", label, x))
    return subjects
