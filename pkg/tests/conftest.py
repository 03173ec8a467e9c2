import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from spatiobox import corrfn
from spatiobox.corrfn import CorrelationFunction

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False, allow_infinity=False)
coeffs = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def series(draw, max_two_j=2, max_terms=4, relational=False, constant=False):
    """A spin-bounded series with arbitrary (unnormalized) coefficients."""
    two_j = draw(st.integers(1, max_two_j))
    if relational:
        pool = [(m, m) for m in range(1, two_j + 1)]
    else:
        pool = [(p.m, p.n) for p in corrfn.canonical_pairs(two_j)]
    chosen = draw(st.lists(st.sampled_from(pool), min_size=1, max_size=max_terms, unique=True))
    terms = [(m, n, draw(coeffs), draw(coeffs)) for m, n in chosen]
    c0 = draw(st.floats(-0.5, 0.5)) if constant else 0.0
    return CorrelationFunction.from_terms(two_j, terms, c0)


@st.composite
def bounded_series(draw, **kw):
    """A series rescaled so that ``max |f| == 1`` (up to the sup tolerance)."""
    f = draw(series(**kw))
    top = corrfn.max_abs(f)
    if top < 1e-6:
        return CorrelationFunction(f.two_j, 0.0, {corrfn.FreqPair(1, 1): (0.5, 0.0)})
    return f.scaled(1.0 / top)


def random_bounded(gen: np.random.Generator, two_j: int, n_terms: int, relational=False) -> CorrelationFunction:
    if relational:
        pool = [(m, m) for m in range(1, two_j + 1)]
    else:
        pool = [(p.m, p.n) for p in corrfn.canonical_pairs(two_j)]
    idx = gen.choice(len(pool), size=min(n_terms, len(pool)), replace=False)
    terms = [(*pool[i], *gen.uniform(-1, 1, 2)) for i in idx]
    f = CorrelationFunction.from_terms(two_j, terms)
    return f.scaled(1.0 / corrfn.max_abs(f))


@pytest.fixture
def gen():
    return np.random.default_rng(20240601)


# one summary line per acceptance criterion
_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "acceptance" in report.keywords and (report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if report.when == "call" or name not in _ACCEPTANCE:
            _ACCEPTANCE[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, seconds = _ACCEPTANCE[name]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({seconds:.2f} s)")
