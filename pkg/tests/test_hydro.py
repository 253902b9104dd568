import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wasep.hydro import MacroProfile, ell_r, fixation_time, g, g0, vee_alpha, wedge_alpha
from wasep.model import ValidationError

alphas = st.floats(0.01, 0.99)
times = st.floats(0.0, 5.0)
xs = st.floats(0.0, 1.0)


def test_time_zero_is_wedge():
    x = np.linspace(0, 1, 101)
    assert np.allclose(g(0.3, 0.0, x), wedge_alpha(0.3, x), atol=1e-15)


def test_parabola_value():
    assert g0(0.5, 0.5, 0.5) == pytest.approx(0.25)
    assert g(0.5, 0.5, 0.5) == pytest.approx(0.25)
    assert vee_alpha(0.5, 0.5) == pytest.approx(-0.5)


def test_fixation_on_grid():
    x = np.linspace(0, 1, 1000)
    assert fixation_time(0.5) == pytest.approx(2.0)
    assert np.array_equal(g(0.5, 2.0, x), vee_alpha(0.5, x))


def test_ell_r_values():
    assert ell_r(0.25, 1.0)[0] == pytest.approx(0.25)
    assert ell_r(0.3, 0.2) == (0.0, 1.0)
    tf = fixation_time(0.3)
    ell, r = ell_r(0.3, tf)
    assert ell == pytest.approx(0.7) and r == pytest.approx(0.7)


def test_scalar_and_array():
    assert isinstance(ell_r(0.25, 1.0)[0], float)
    ell, r = ell_r(0.25, np.array([0.1, 1.0]))
    assert ell.shape == (2,) and r.shape == (2,)
    assert isinstance(g(0.5, 1.0, 0.2), float)


@given(alphas, times, xs)
def test_sandwich(a, t, x):
    v = g(a, t, x)
    assert vee_alpha(a, x) - 1e-12 <= v <= wedge_alpha(a, x) + 1e-12


@given(alphas, times, times, xs)
def test_non_increasing_in_time(a, t1, t2, x):
    lo, hi = sorted((t1, t2))
    assert g(a, hi, x) <= g(a, lo, x) + 1e-12


@given(alphas, times)
def test_boundary_values(a, t):
    assert g(a, t, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert g(a, t, 1.0) == pytest.approx(2 * a - 1, abs=1e-12)


@given(alphas, times, times)
def test_ell_r_monotone(a, t1, t2):
    lo, hi = sorted((t1, t2))
    l1, r1 = ell_r(a, lo)
    l2, r2 = ell_r(a, hi)
    assert l2 >= l1 - 1e-12 and r2 <= r1 + 1e-12
    assert l1 <= r1 + 1e-12


@given(alphas, st.floats(0.0, 3.0))
def test_after_fixation(a, extra):
    t = fixation_time(a) + extra
    ell, r = ell_r(a, t)
    assert ell == pytest.approx(1 - a) and r == pytest.approx(1 - a)
    x = np.linspace(0, 1, 201)
    assert np.allclose(g(a, t, x), vee_alpha(a, x), atol=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5, 0.8])
def test_continuity_in_time(alpha):
    t = np.linspace(0, 4, 4001)
    dt = t[1] - t[0]
    x = np.linspace(0, 1, 101)
    G = np.stack([g(alpha, ti, x) for ti in t])
    assert np.max(np.abs(np.diff(G, axis=0))) <= dt / 2 + 1e-9
    ell, r = ell_r(alpha, t)
    assert np.max(np.abs(np.diff(ell))) <= dt + 1e-9
    assert np.max(np.abs(np.diff(r))) <= dt + 1e-9


def test_profile_region_matches_ell_r():
    # the profile leaves the minimum exactly on (ell, r)
    a, t = 0.25, 1.0
    x = np.linspace(0, 1, 20001)
    above = g(a, t, x) > vee_alpha(a, x) + 1e-12
    ell, r = ell_r(a, t)
    assert x[above].min() == pytest.approx(ell, abs=1e-3)
    assert x[above].max() == pytest.approx(r, abs=1e-3)


def test_macro_profile():
    m = MacroProfile(0.5)
    rows = m.grid([0.5, 1.0], n_x=11)
    assert rows.shape == (22, 3)
    assert rows[5, 2] == pytest.approx(0.25)
    assert m.fixation_time == pytest.approx(2.0)
    assert m.ell_r(1.0) == ell_r(0.5, 1.0)


def test_validation():
    with pytest.raises(ValidationError):
        MacroProfile(1.5)
    with pytest.raises(ValidationError):
        g(0.5, -1.0, 0.3)
    with pytest.raises(ValidationError):
        ell_r(0.5, -0.1)


def test_symmetric_density_fixation_formula():
    for a in (0.1, 0.3, 0.5):
        assert fixation_time(a) == pytest.approx(1 + 2 * math.sqrt(a * (1 - a)))
