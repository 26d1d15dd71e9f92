import sys
import numpy as np
import pytest

from affordview.geometry import generate_default_viewpoints
from affordview.synth import SyntheticSpec, generate_trials, smooth_quality
from affordview.trials import Affordance, TrialRecord, TrialSet

R = Affordance.REACHABILITY
P = Affordance.PASSABILITY


def rec(subject, aff, vid, time, errors=0, robot="talon"):
    return TrialRecord(str(subject), robot, aff, vid, float(time), errors)


def group(times, aff=R, vid=1):
    """One (affordance, viewpoint) group with one record per subject."""
    return TrialSet.from_records(rec(k, aff, vid, t) for k, t in enumerate(times))


@pytest.fixture(scope="session")
def lattice():
    return generate_default_viewpoints()


@pytest.fixture(scope="session")
def synthetic_trials(lattice):
    return generate_trials(SyntheticSpec(quality=smooth_quality(lattice), seed=11), lattice)


def study_shaped_design(rng, n_total=576, n_a=4, n_b=30, empty=((3, 29),)):
    """Unbalanced two-factor layout with the given empty cells.

    Every other cell gets at least one observation and at least one cell gets
    two or more, so both nested models are estimable.
    """
    cells = [(i, j) for i in range(n_a) for j in range(n_b) if (i, j) not in set(empty)]
    extra = rng.multinomial(n_total - len(cells), np.full(len(cells), 1 / len(cells)))
    a, b = [], []
    for (i, j), e in zip(cells, extra):
        a += [i] * (1 + e)
        b += [j] * (1 + e)
    return np.array(a), np.array(b)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"ACCEPTANCE {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
