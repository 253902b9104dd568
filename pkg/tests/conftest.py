import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from wasep.model import ModelParams, ParticleConfig

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def params_st(draw, n_min=2, n_max=12, symmetric=False):
    N = draw(st.integers(n_min, n_max))
    k = draw(st.integers(1, N - 1))
    p = 0.5 if symmetric else draw(st.sampled_from([0.5, 0.55, 0.6, 0.7, 0.9]))
    return ModelParams(N, k, p)


@st.composite
def config_st(draw, N=None, k=None):
    N = N if N is not None else draw(st.integers(2, 16))
    k = k if k is not None else draw(st.integers(1, N - 1))
    sites = draw(st.permutations(range(N)))[:k]
    occ = np.zeros(N, dtype=np.int8)
    occ[list(sites)] = 1
    return ParticleConfig(occ)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record one line each here; printed again in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
