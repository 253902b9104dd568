import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wasep.dynamics import (CouplingEngine, ensemble_chunks, ensemble_init, merging_time, merging_times,
                            run_ensemble, wilson_interval)
from wasep.equilibrium import exact_pi
from wasep.exact import build_generator, transient_many, tv_curve
from wasep.io import write_csv
from wasep.model import HeightFn, ModelParams, ValidationError, enumerate_states, extremal_heights

from conftest import config_st


def state_codes(occ):
    return occ.astype(np.int64) @ (1 << np.arange(occ.shape[-1]))


def empirical_law(P, occ):
    ref = {int(c): i for i, c in enumerate(state_codes(enumerate_states(P.N, P.k)))}
    idx = np.array([ref[int(c)] for c in state_codes(occ)])
    return np.bincount(idx, minlength=len(ref)) / len(idx)


def random_ordered_pair(P, rng):
    H = build_generator(P).heights() if P.n_states <= 5000 else None
    if H is not None:
        i, j = rng.integers(0, H.shape[0], 2)
        return np.maximum(H[i], H[j]), np.minimum(H[i], H[j])
    a, b = (np.concatenate([[0], np.cumsum(2 * rng.permutation(np.r_[np.ones(P.k), np.zeros(P.N - P.k)]) - 1)])
            for _ in range(2))
    return np.maximum(a, b).astype(np.int64), np.minimum(a, b).astype(np.int64)


def is_height(h, N, k):
    return h[0] == 0 and h[-1] == 2 * k - N and np.all(np.abs(np.diff(h)) == 1)


class TestEngine:
    def test_two_state_transition(self):
        P = ModelParams(2, 1, 0.6)
        rec = run_ensemble(P, ["max"], [1.0], 100_000, seed=3)
        frac = (rec.heights[:, 0, 0, 1] == -1).mean()
        target = 0.6 * (1 - math.exp(-1))
        assert abs(frac - target) <= 3 * math.sqrt(target * (1 - target) / 100_000)

    @pytest.mark.parametrize("N,k,p", [(4, 2, 0.6), (5, 2, 0.6), (6, 3, 0.5), (6, 1, 0.7), (7, 2, 0.55)])
    def test_marginal_law(self, N, k, p):
        P = ModelParams(N, k, p)
        gen = build_generator(P)
        rec = run_ensemble(P, ["max"], [1.0], 100_000, seed=11)
        emp = empirical_law(P, rec.occupancies()[:, 0, 0])
        exact = transient_many(gen, np.eye(gen.n_states)[[gen.extremal_indices()[0]]], [1.0]).dist[0, 0]
        assert 0.5 * np.abs(emp - exact).sum() <= 0.01

    @pytest.mark.slow
    @pytest.mark.parametrize("N,k,p", [(8, 3, 0.6), (9, 3, 0.5)])
    def test_marginal_law_larger(self, N, k, p):
        # 56 and 84 states: 1e6 replicas keep the sampling noise of the TV estimate well under 0.01
        P = ModelParams(N, k, p)
        gen = build_generator(P)
        rec = run_ensemble(P, ["max"], [1.0], 1_000_000, seed=12)
        emp = empirical_law(P, rec.occupancies()[:, 0, 0])
        exact = transient_many(gen, np.eye(gen.n_states)[[gen.extremal_indices()[0]]], [1.0]).dist[0, 0]
        assert 0.5 * np.abs(emp - exact).sum() <= 0.01

    def test_coalescence_absorbing(self):
        P = ModelParams(6, 3, 0.6)
        eng = CouplingEngine(P, ["max", "min"], seed=5)
        assert math.isfinite(eng.merging_time(1e6))
        assert eng.coalesced()
        for _ in range(1000):
            eng.step(1)
            assert eng.coalesced()

    def test_chains_stay_valid_and_labelled(self):
        P = ModelParams(9, 4, 0.55)
        eng = CouplingEngine(P, {"top": "max", "eq": "pi", "bottom": "min"}, seed=2)
        eng.advance(3.0)
        assert eng.clock == 3.0 and eng.labels == ["top", "eq", "bottom"]
        for h in eng.chains:
            assert h.N == 9 and h.k == 4
        assert np.all(eng.chain("top").heights >= eng.chain("eq").heights)
        assert np.all(eng.chain("eq").heights >= eng.chain("bottom").heights)

    def test_advance_backwards(self):
        eng = CouplingEngine(ModelParams(4, 2, 0.6), ["max"]).advance(1.0)
        with pytest.raises(ValidationError):
            eng.advance(0.5)

    def test_custom_initial_mismatch(self):
        with pytest.raises(ValidationError):
            CouplingEngine(ModelParams(5, 2, 0.6), {"a": HeightFn(extremal_heights(5, 3, "max"))})

    def test_step_counts_events(self):
        eng = CouplingEngine(ModelParams(8, 3, 0.6), ["max", "min"], seed=1)
        eng.step(250)
        assert eng.events == 250 and eng.clock > 0

    @settings(max_examples=25)
    @given(st.integers(3, 12), st.data(), st.integers(0, 2**32))
    def test_order_preserved(self, N, data, seed):
        k = data.draw(st.integers(1, N - 1))
        p = data.draw(st.sampled_from([0.5, 0.6, 0.8]))
        P = ModelParams(N, k, p)
        a = data.draw(config_st(N, k)).height.heights
        b = data.draw(config_st(N, k)).height.heights
        hi, lo = np.maximum(a, b), np.minimum(a, b)
        eng = CouplingEngine(P, {"hi": HeightFn(hi), "lo": HeightFn(lo)}, seed=seed)
        for _ in range(10):
            eng.step(20)
            h = eng.heights()
            assert np.all(h[0] >= h[1])
            assert is_height(h[0], N, k) and is_height(h[1], N, k)

    def test_event_rate_bounded(self):
        P = ModelParams(12, 5, 0.6)
        rec = run_ensemble(P, ["max", "min"], [20.0], 500, seed=4)
        rate = rec.events.mean() / 20.0
        assert rate <= (P.N - 1) * (P.p + P.q) * 2


class TestMerging:
    def test_two_sites_mean(self):
        taus = merging_times(ModelParams(2, 1, 0.6), 100_000, seed=9, t_max=1e3)
        assert abs(taus.mean() - 1.0) <= 3 / math.sqrt(100_000)

    def test_survival_monotone(self):
        taus = merging_times(ModelParams(6, 3, 0.5), 2000, seed=1, t_max=1e4)
        t = np.linspace(0, 60, 61)
        surv = (taus[None, :] > t[:, None]).mean(axis=1)
        assert np.all(np.diff(surv) <= 0)

    def test_dominates_tv(self):
        P = ModelParams(6, 3, 0.5)
        n = 10_000
        taus = merging_times(P, n, seed=2, t_max=1e4)
        t = np.linspace(0.5, 40, 30)
        surv = (taus[None, :] > t[:, None]).mean(axis=1)
        d = tv_curve(build_generator(P), t).d
        sigma = np.sqrt(np.maximum(surv * (1 - surv), 1 / n) / n)
        assert np.all(surv >= d - 3 * sigma)

    def test_timeout(self):
        assert merging_time(ModelParams(30, 15, 0.5), t_max=0.01) == math.inf

    def test_single_engine_matches_ensemble_shape(self):
        P = ModelParams(5, 2, 0.6)
        t = merging_time(P, 1e4, seed=3, replica=0)
        assert 0 < t < 1e4


class TestEnsemble:
    def test_deterministic_bytes(self, tmp_path):
        P = ModelParams(7, 3, 0.6)
        paths = []
        for i in range(2):
            rec = run_ensemble(P, ["max", "min", "pi"], [0.5, 1.0, 2.0], 50, seed=42)
            paths.append(write_csv(tmp_path / f"run{i}.csv", rec.columns(), rec.rows()))
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_summary_fields(self):
        rec = run_ensemble(ModelParams(6, 3, 0.6), ["max", "min"], [1.0, 4.0], 10_000, seed=1)
        s = rec.summary()
        assert s["replicas"] == 10_000 and s["seed"] == 1
        entry = s["chains"]["min"]["coalesced"]
        assert all(lo <= m <= hi for lo, m, hi in zip(entry["ci_low"], entry["mean"], entry["ci_high"]))
        assert set(s["chains"]["max"]) >= {"f1", "A", "Q", "area_vs_0", "H_vs_0"}

    def test_pi_chain_independent_and_stationary(self):
        P = ModelParams(6, 2, 0.6)
        with_others = ensemble_init(P, ["max", "min", "pi"], 20_000, seed=8)[:, 2]
        alone = ensemble_init(P, ["pi"], 20_000, seed=8)[:, 0]
        assert np.array_equal(with_others, alone)
        emp = empirical_law(P, ((np.diff(alone, axis=1) + 1) // 2))
        assert 0.5 * np.abs(emp - exact_pi(P).probs).sum() <= 0.02

    def test_conservation(self):
        P = ModelParams(10, 4, 0.55)
        rec = run_ensemble(P, ["max", "pi", "min"], np.linspace(0.5, 5, 10), 100, seed=0)
        assert np.all(rec.occupancies().sum(axis=-1) == 4)
        assert np.all(rec.heights[..., 0] == 0) and np.all(rec.heights[..., -1] == 2 * 4 - 10)

    def test_times_strictly_increasing(self):
        with pytest.raises(ValidationError):
            run_ensemble(ModelParams(4, 2, 0.6), ["max"], [1.0, 1.0], 2, seed=0)

    def test_replicas_positive(self):
        with pytest.raises(ValidationError):
            run_ensemble(ModelParams(4, 2, 0.6), ["max"], [1.0], 0, seed=0)

    def test_chunks_cover_schedule(self):
        P = ModelParams(8, 3, 0.6)
        t = np.linspace(0.5, 5, 7)
        parts = list(ensemble_chunks(P, ["max", "min"], t, 30, seed=1, chunk=3))
        assert np.array_equal(np.concatenate([tc for tc, _ in parts]), t)
        h = np.concatenate([hh for _, hh in parts], axis=1)
        assert h.shape == (30, 7, 2, 9) and np.all(h[:, :, 0] >= h[:, :, 1])


def test_wilson_interval():
    lo, hi = wilson_interval(np.array([0, 50, 100]), 100)
    assert lo[0] == 0 and hi[2] == pytest.approx(1.0)
    assert lo[1] < 0.5 < hi[1]
