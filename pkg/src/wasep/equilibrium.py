"""Exact and sampled access to the stationary measure.

The stationary weight of a configuration is ``lam**(-A)``. Equivalently the
particle spacings ``chi_i = xi_{i+1} - xi_i`` (``chi_k = N + 1 - xi_k``) are
independent geometric variables on ``{1, 2, ...}`` with ``P(chi_i > m) =
lam**(-i*m)``, conditioned on ``sum(chi) <= N``. :class:`EquilibriumSampler`
uses that representation with rejection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import ModelParams, ParticleConfig, ValidationError, batch_stats, enumerate_states, heights_from_occupancy

log = logging.getLogger(__name__)

DEFAULT_CAP = 200_000


class StateSpaceTooLarge(RuntimeError):
    """The requested exact computation exceeds the configured state cap."""

    def __init__(self, n_states: int, cap: int):
        super().__init__(f"C(N,k) = {n_states} states exceeds cap {cap}; raise the cap to at least {n_states}")
        self.n_states = n_states
        self.cap = cap


@dataclass(frozen=True, eq=False)
class EquilibriumTable:
    params: ModelParams
    states: np.ndarray  # (M, N) int8 occupancies, colex order
    A: np.ndarray
    log_weights: np.ndarray
    log_Z: float
    probs: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    def heights(self) -> np.ndarray:
        return heights_from_occupancy(self.states)

    def expect(self, values: np.ndarray) -> float:
        return float(np.dot(self.probs, values))

    def index_of(self, cfg: ParticleConfig) -> int:
        hit = np.flatnonzero((self.states == cfg.occupancy).all(axis=1))
        if hit.size != 1:
            raise KeyError(str(cfg))
        return int(hit[0])


def exact_pi(params: ModelParams, cap: int = DEFAULT_CAP) -> EquilibriumTable:
    if params.n_states > cap:
        raise StateSpaceTooLarge(params.n_states, cap)
    states = enumerate_states(params.N, params.k)
    A = batch_stats(states)["A"]
    logw = -A * params.log_lam
    logZ = float(logsumexp(logw))
    probs = np.exp(logw - logZ)
    return EquilibriumTable(params, states, A, logw, logZ, probs)


def _geometric_spacings(log_lam: float, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``(size, k)`` draws of chi_i with ``P(chi_i > m) = lam**(-i m)`` by inverse CDF."""
    i = np.arange(1, k + 1)
    u = rng.random((size, k))
    # log(1-u) / log(mu_i) with log(mu_i) = -i log(lam); log1p keeps u near 0 exact
    return 1 + np.floor(np.log1p(-u) / (-i * log_lam)).astype(np.int64)


def _positions_from_spacings(chi: np.ndarray, N: int) -> np.ndarray:
    # xi_k = N + 1 - chi_k, xi_i = xi_{i+1} - chi_i
    tail = np.cumsum(chi[:, ::-1], axis=1)[:, ::-1]
    return N + 1 - tail


class EquilibriumSampler:
    """Exact sampler for the stationary measure with an MCMC fallback.

    When the acceptance rate over the first ``probe`` proposals falls below
    ``min_acceptance``, samples are instead produced by running the dynamics
    from the minimal configuration for ``20 / gap`` time units, and
    :attr:`approximate` is set.
    """

    def __init__(self, params: ModelParams, probe: int = 10_000, min_acceptance: float = 1e-3):
        self.params = params
        self.probe = probe
        self.min_acceptance = min_acceptance
        self.proposed = 0
        self.accepted = 0
        self.approximate = False

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``(n, N)`` int8 occupancies."""
        P = self.params
        if P.lam == 1.0:
            keys = rng.random((n, P.N))
            idx = np.argsort(keys, axis=1)[:, : P.k]
            occ = np.zeros((n, P.N), dtype=np.int8)
            np.put_along_axis(occ, idx, 1, axis=1)
            return occ
        if self.approximate:
            return self._mcmc(n, rng)
        out = []
        have = 0
        batch = max(64, min(n, 100_000))
        while have < n:
            chi = _geometric_spacings(P.log_lam, P.k, batch, rng)
            ok = chi.sum(axis=1) <= P.N
            self.proposed += batch
            self.accepted += int(ok.sum())
            if self.proposed >= self.probe and self.acceptance_rate < self.min_acceptance:
                log.warning("rejection acceptance %.2e below %.0e; falling back to MCMC (approximate)",
                            self.acceptance_rate, self.min_acceptance)
                self.approximate = True
                return self._mcmc(n, rng) if not out else np.concatenate(out + [self._mcmc(n - have, rng)])[:n]
            pos = _positions_from_spacings(chi[ok], P.N)
            occ = np.zeros((pos.shape[0], P.N), dtype=np.int8)
            np.put_along_axis(occ, pos - 1, 1, axis=1)
            out.append(occ)
            have += occ.shape[0]
        return np.concatenate(out)[:n]

    def _mcmc(self, n: int, rng: np.random.Generator) -> np.ndarray:
        from . import _engine
        from .model import extremal_heights

        P = self.params
        init = np.broadcast_to(extremal_heights(P.N, P.k, "min"), (n, 1, P.N + 1)).copy()
        keys = rng.integers(0, 2**63, size=n, dtype=np.uint64)
        h, _ = _engine.record_ensemble(init, P.p, keys, np.array([20.0 / P.gap]))
        return ((np.diff(h[:, 0, 0, :], axis=1) + 1) // 2).astype(np.int8)


def sample_pi(params: ModelParams, rng: np.random.Generator) -> ParticleConfig:
    return ParticleConfig(EquilibriumSampler(params).sample(1, rng)[0])


def sample_pi_many(params: ModelParams, n: int, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """``n`` stationary samples and whether they are approximate (MCMC fallback)."""
    s = EquilibriumSampler(params)
    return s.sample(n, rng), s.approximate


@dataclass(frozen=True)
class DensityProfile:
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def violations(self) -> np.ndarray:
        """Sites (1-based) where the value leaves ``[lower, upper]`` (relative slack 1e-12)."""
        tol = 1e-12 * np.maximum(np.abs(self.lower), np.abs(self.upper))
        bad = (self.values < self.lower - tol) | (self.values > self.upper + tol)
        return np.flatnonzero(bad) + 1


def density_bounds(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(1, params.N + 1)
    base = params.k / params.N
    ll = params.log_lam
    return base * np.exp((x - params.N) * ll), base * np.exp((x - 1) * ll)


def density_profile(params: ModelParams, source) -> DensityProfile:
    """Occupation probability per site from an exact table or an ``(n, N)`` sample array."""
    if isinstance(source, EquilibriumTable):
        values = source.probs @ source.states.astype(float)
    else:
        samples = np.asarray(source)
        if samples.shape[0] < 10_000:
            log.warning("density_profile from only %d samples", samples.shape[0])
        values = samples.mean(axis=0)
    lo, hi = density_bounds(params)
    return DensityProfile(values, lo, hi)


@dataclass(frozen=True)
class GapStatistics:
    Q: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray

    def mean(self) -> float:
        return float(self.Q.mean())

    def quantiles(self, qs=(0.5, 0.9, 0.99)) -> dict[float, float]:
        return {q: float(np.quantile(self.Q, q)) for q in qs}

    def survival(self, thresholds) -> np.ndarray:
        """Empirical ``P(Q >= m)`` for each threshold ``m``."""
        thr = np.asarray(thresholds)
        return (self.Q[:, None] >= thr[None, :]).mean(axis=0)


def gap_statistics(samples: np.ndarray) -> GapStatistics:
    s = batch_stats(samples)
    return GapStatistics(s["Q"], s["Q1"], s["Q2"])


def log_density_profile(samples: np.ndarray, eps: float = 0.05, z=None) -> tuple[np.ndarray, np.ndarray]:
    """``log(mean particle count in ((z-eps)N, (z+eps)N]) / log k`` over a grid of ``z``.

    The default grid ``z = eps, 3 eps, ...`` tiles the segment with disjoint
    windows. Returns ``(z, profile)``; windows with no particles give ``-inf``.
    """
    samples = np.asarray(samples)
    N = samples.shape[1]
    k = int(samples[0].sum())
    if k < 2:
        raise ValidationError("log_density_profile needs k >= 2")
    if z is None:
        z = np.arange(eps, 1.0, 2 * eps)
    z = np.asarray(z, dtype=float)
    csum = np.concatenate([[0.0], samples.mean(axis=0).cumsum()])
    lo = np.clip(np.floor((z - eps) * N + 1e-9).astype(int), 0, N)
    hi = np.clip(np.floor((z + eps) * N + 1e-9).astype(int), 0, N)
    counts = csum[hi] - csum[lo]
    with np.errstate(divide="ignore"):
        return z, np.log(counts) / math.log(k)
