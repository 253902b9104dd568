import math

import numpy as np
import pytest
from hypothesis import given

from wasep.equilibrium import StateSpaceTooLarge, exact_pi
from wasep.exact import (build_generator, check_generator, d_exact, detailed_balance_residual, exact_gap,
                         exact_summary, mixing_time, point_mass, spectrum, stationary_solve, transient,
                         transient_many, tv, tv_curve)
from wasep.model import ModelParams, ParticleConfig, ValidationError

from conftest import params_st


class TestGenerator:
    def test_two_sites(self):
        gen = build_generator(ModelParams(2, 1, 0.6))
        i, j = gen.index("10"), gen.index("01")
        L = gen.L.toarray()
        assert L[i, j] == pytest.approx(0.6) and L[j, i] == pytest.approx(0.4)
        assert L[i, i] == pytest.approx(-0.6) and L[j, j] == pytest.approx(-0.4)

    def test_structure_N4(self):
        gen = build_generator(ModelParams(4, 2, 0.55))
        assert gen.n_states == 6
        assert np.max(np.abs(np.asarray(gen.L.sum(axis=1)).ravel())) <= 1e-14
        check_generator(gen)
        # irreducible: the kernel of L is one-dimensional
        assert np.sum(np.abs(spectrum(gen)) < 1e-10) == 1

    @given(params_st(n_max=9))
    def test_edge_count_and_balance(self, P):
        gen = build_generator(P)
        s = gen.states
        patterns = np.sum(s[:, :-1] != s[:, 1:])
        assert gen.n_edges == patterns
        assert detailed_balance_residual(gen) <= 1e-12
        off = gen.L.copy()
        off.setdiag(0)
        assert off.min() >= 0

    def test_detailed_balance_N5(self):
        assert detailed_balance_residual(build_generator(ModelParams(5, 2, 0.7))) <= 1e-12

    def test_cap(self):
        with pytest.raises(StateSpaceTooLarge):
            build_generator(ModelParams(16, 8, 0.6), cap=1000)

    def test_index_lookup(self):
        gen = build_generator(ModelParams(5, 2, 0.6))
        for i, s in enumerate(gen.states):
            assert gen.index(ParticleConfig(s)) == i
        with pytest.raises(KeyError):
            gen.index("11100")


class TestTransient:
    def test_t0(self):
        gen = build_generator(ModelParams(5, 2, 0.6))
        mu = np.random.default_rng(0).dirichlet(np.ones(gen.n_states))
        assert np.array_equal(transient(gen, mu, 0.0), mu)

    def test_two_state(self):
        gen = build_generator(ModelParams(2, 1, 0.6))
        out = transient(gen, point_mass(gen, gen.index("10")), 1.0)
        assert out[gen.index("01")] == pytest.approx(0.6 * (1 - math.exp(-1)), abs=1e-12)

    def test_convergence(self):
        gen = build_generator(ModelParams(5, 2, 0.6))
        t = 50 / gen.params.gap
        out = transient(gen, point_mass(gen, gen.extremal_indices()[0]), t)
        assert tv(out, gen.pi) <= 1e-8

    def test_truncation_reported(self):
        gen = build_generator(ModelParams(6, 3, 0.6))
        res = transient_many(gen, np.eye(gen.n_states)[:3], [0.1, 1.0, 10.0])
        assert res.discarded_mass <= 1e-12
        assert np.allclose(res.dist.sum(axis=-1), 1.0, atol=1e-10)
        assert res.renorm_delta <= 1e-10

    def test_negative_time(self):
        gen = build_generator(ModelParams(3, 1, 0.6))
        with pytest.raises(ValidationError):
            transient(gen, point_mass(gen, 0), -1.0)


class TestTV:
    def test_two_state_closed_form(self):
        gen = build_generator(ModelParams(2, 1, 0.6))
        t = np.linspace(0, 5, 11)
        assert np.allclose(tv_curve(gen, t).d, 0.6 * np.exp(-t), atol=1e-10)

    def test_spectral_matches_uniformization(self):
        gen = build_generator(ModelParams(6, 3, 0.6))
        t = np.linspace(0, 40, 9)
        a = tv_curve(gen, t, method="uniformization").d
        b = tv_curve(gen, t, method="spectral").d
        assert np.max(np.abs(a - b)) <= 1e-10

    def test_non_increasing(self):
        gen = build_generator(ModelParams(6, 3, 0.55))
        d = tv_curve(gen, np.linspace(0, 30, 31)).d
        assert np.all(np.diff(d) <= 1e-12)

    def test_worst_start_is_extremal(self):
        gen = build_generator(ModelParams(5, 2, 0.6))
        curve = tv_curve(gen, np.linspace(0.1, 20, 25))
        assert set(curve.argmax.tolist()) <= set(gen.extremal_indices())

    @pytest.mark.parametrize("N,k,p", [(5, 2, 0.5), (6, 3, 0.6), (7, 3, 0.55), (8, 2, 0.7), (10, 5, 0.5)])
    def test_extremals_equal_all(self, N, k, p):
        gen = build_generator(ModelParams(N, k, p))
        t = gen.params.gap ** -1 * np.geomspace(0.05, 5, 12)
        shortfall = np.max(tv_curve(gen, t, "all").d - tv_curve(gen, t, "extremals").d)
        assert shortfall <= 1e-12

    def test_bad_args(self):
        gen = build_generator(ModelParams(3, 1, 0.6))
        with pytest.raises(ValidationError):
            tv_curve(gen, [1.0, 0.5])
        with pytest.raises(ValidationError):
            tv_curve(gen, [1.0], "corners")


class TestMixing:
    def test_two_state(self):
        gen = build_generator(ModelParams(2, 1, 0.6))
        assert mixing_time(gen, 0.25) == pytest.approx(math.log(2.4), rel=1e-6)

    def test_monotone_in_eps(self):
        gen = build_generator(ModelParams(5, 2, 0.6))
        assert mixing_time(gen, 0.999) < mixing_time(gen, 0.25) < mixing_time(gen, 0.01)

    def test_decay_rate_is_gap(self):
        gen = build_generator(ModelParams(5, 2, 0.6))
        gap = gen.params.gap
        t = np.linspace(30, 50, 11) / gap
        slope = -np.polyfit(t, np.log(tv_curve(gen, t, method="spectral").d), 1)[0]
        assert abs(slope - gap) <= 0.02 * gap

    def test_bad_eps(self):
        gen = build_generator(ModelParams(3, 1, 0.6))
        with pytest.raises(ValidationError):
            mixing_time(gen, 1.0)

    def test_summary(self):
        gen = build_generator(ModelParams(5, 2, 0.6))
        s = exact_summary(gen, [0.25, 0.1])
        assert abs(s["gap_exact"] - s["gap_formula"]) <= 1e-10
        assert s["mix_times"]["0.25"] < s["mix_times"]["0.1"]


class TestGap:
    def test_formula_small(self):
        P = ModelParams(3, 1, 0.6)
        formula = P.rho + 4 * P.sqrt_pq * math.sin(math.pi / 6) ** 2
        assert abs(exact_gap(build_generator(P)) - formula) <= 1e-10

    def test_k_independence(self):
        g = [exact_gap(build_generator(ModelParams(6, k, 0.6))) for k in (1, 2, 3)]
        assert max(g) - min(g) <= 1e-10

    def test_symmetric(self):
        assert exact_gap(build_generator(ModelParams(4, 2, 0.5))) == pytest.approx(1 - math.sqrt(2) / 2, abs=1e-12)

    def test_dense_cap(self):
        with pytest.raises(StateSpaceTooLarge):
            spectrum(build_generator(ModelParams(14, 7, 0.6)))


class TestStationary:
    @given(params_st(n_max=7))
    def test_null_vector(self, P):
        gen = build_generator(P)
        assert np.max(np.abs(stationary_solve(gen) - exact_pi(P).probs)) <= 1e-10

    def test_d_exact_scalar(self):
        gen = build_generator(ModelParams(2, 1, 0.6))
        assert d_exact(gen, 1.0) == pytest.approx(0.6 * math.exp(-1), abs=1e-10)
