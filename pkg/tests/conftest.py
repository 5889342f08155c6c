import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from diffnet.matops import Factor
from diffnet.synthdata import make_model_pair

settings.register_profile(
    "default", max_examples=50, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_symmetric(rng, d, scale=1.0):
    A = rng.standard_normal((d, d)) * scale
    return (A + A.T) / 2


def random_spd(rng, d, ridge=0.5):
    A = rng.standard_normal((d, d))
    return A @ A.T / d + ridge * np.eye(d)


def random_factor(rng, d, r, r1):
    return Factor(rng.standard_normal((d, r)), r1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def truth_30():
    """Model 1 against model 2, d = 30, r = 1, seed 7."""
    return make_model_pair(1, 2, 30, 1, 7)


# -- acceptance report ---------------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one outcome line per acceptance criterion."""

    def record(number, title, passed, detail=""):
        _ACCEPTANCE[number] = (title, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {number:>2}. {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
