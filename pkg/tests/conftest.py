import numpy as np
import pytest

from gridlyap.lyapunov import assemble_lmi, find_candidate
from gridlyap.model import builtin_case
from gridlyap.state_space import build_state_space

CASES = ("two_bus", "nine_bus", "new_england_39")


@pytest.fixture(scope="session")
def models():
    return {name: build_state_space(builtin_case(name)) for name in CASES}


@pytest.fixture(scope="session")
def certificates(models):
    return {name: find_candidate(assemble_lmi(model)) for name, model in models.items()}


@pytest.fixture(scope="session")
def two_bus(models):
    return models["two_bus"]


@pytest.fixture(scope="session")
def nine_bus(models):
    return models["nine_bus"]


def random_states_in_p(model, count, rng, velocity_scale=2.0):
    """Uniform angle deviations inside P (by rejection) with normal velocities."""
    out = []
    ds = model.delta_star
    while len(out) < count:
        x1 = rng.uniform(-np.pi, np.pi, size=(4 * count, model.n))
        delta = ds + x1 @ model.incidence_e.T
        keep = np.all(np.abs(delta + ds) < np.pi, axis=1)
        for row in x1[keep]:
            out.append(np.concatenate([row, velocity_scale * rng.normal(size=model.n)]))
    return np.array(out[:count])


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:>3}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int("".join(c for c in s.split()[1] if c.isdigit())), s)):
            terminalreporter.write_line(line)
