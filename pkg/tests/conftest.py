import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_image(rng, h=12, w=16):
    return rng.random((h, w, 3))


@st.composite
def images(draw, max_side=9):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    unit = st.floats(0.0, 1.0, allow_nan=False, allow_subnormal=False)
    return draw(arrays(np.float64, (h, w, 3), elements=unit))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
