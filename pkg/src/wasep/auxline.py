"""Exclusion particles on the integer line in front of a slow right-moving particle.

``n`` particles jump right at rate ``p`` and left at rate ``q`` with
exclusion; an extra rightmost particle only jumps right, at rate
``beta * b``. With spacings drawn as independent geometrics with parameters
``mu_i = beta + lam**-i (1 - beta)`` (``P(spacing_i = m) = (1 - mu_i) mu_i**(m-1)``)
the spacing law is stationary, and every particle drifts at speed
``beta * b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import stats as sstats

from .model import ModelParams, ValidationError
from .rng import exponential, generator, stream_keys, uniform

GEOM_CAP = 10**9


def _rates(params) -> tuple[float, float]:
    p = params.p if isinstance(params, ModelParams) else float(params)
    if not 0.5 <= p < 1:
        raise ValidationError(f"p must be in [1/2, 1), got {p}")
    return p, 1.0 - p


def mu_values(n: int, beta: float, params) -> np.ndarray:
    p, q = _rates(params)
    i = np.arange(1, n + 1)
    return beta + (q / p) ** i * (1.0 - beta)


@dataclass
class AuxSystem:
    """State of the auxiliary system; ``positions[-1]`` is the slow particle."""

    n: int
    beta: float
    p: float
    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValidationError(f"beta must be in (0, 1), got {self.beta}")
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.positions.shape != (self.n + 1,) or np.any(np.diff(self.positions) <= 0):
            raise ValidationError("positions must be n+1 strictly increasing integers")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def b(self) -> float:
        return 2.0 * self.p - 1.0

    @property
    def lam(self) -> float:
        return self.p / self.q

    @property
    def mu(self) -> np.ndarray:
        return mu_values(self.n, self.beta, self.p)

    def spacings(self) -> np.ndarray:
        return np.diff(self.positions)


def sample_spacings(n: int, beta: float, params, size: int, rng: np.random.Generator) -> np.ndarray:
    """``(size, n)`` independent stationary spacings (geometric on ``{1, 2, ...}``)."""
    p, q = _rates(params)
    if p == q:
        raise ValidationError("stationary spacings need lam > 1 (p > 1/2)")
    mu = mu_values(n, beta, p)
    u = rng.random((size, n))
    m = 1.0 + np.floor(np.log1p(-u) / np.log(mu))
    if np.any(m > GEOM_CAP):
        raise OverflowError(f"geometric spacing exceeded {GEOM_CAP}")
    return m.astype(np.int64)


def positions_from_spacings(spacings: np.ndarray) -> np.ndarray:
    """Positions with the slow particle at 0, built from the right."""
    s = np.asarray(spacings, dtype=np.int64)
    tail = np.cumsum(s[..., ::-1], axis=-1)[..., ::-1]
    return np.concatenate([-tail, np.zeros(s.shape[:-1] + (1,), dtype=np.int64)], axis=-1)


def init_stationary(n: int, beta: float, params, rng: np.random.Generator) -> AuxSystem:
    if not 0 < beta < 1:
        raise ValidationError(f"beta must be in (0, 1), got {beta}")
    p, _ = _rates(params)
    pos = positions_from_spacings(sample_spacings(n, beta, p, 1, rng))[0]
    return AuxSystem(n, beta, p, pos)


@nb.njit(cache=True)
def _evolve(pos, p, slow_rate, state, t0, t_end):
    n1 = pos.shape[0]
    n = n1 - 1
    q = 1.0 - p
    t = t0
    rates = np.empty(2 * n + 1)
    while True:
        total = 0.0
        for i in range(n):
            r = p if pos[i] + 1 < pos[i + 1] else 0.0
            l = q if i == 0 or pos[i] - 1 > pos[i - 1] else 0.0
            rates[2 * i] = r
            rates[2 * i + 1] = l
            total += r + l
        rates[2 * n] = slow_rate
        total += slow_rate
        dt = exponential(state, total)
        if t + dt > t_end:
            return t_end
        t += dt
        u = uniform(state) * total
        j = 0
        acc = rates[0]
        while acc <= u and j < 2 * n:
            j += 1
            acc += rates[j]
        while rates[j] == 0.0:
            j -= 1
        if j == 2 * n:
            pos[n] += 1
        elif j % 2 == 0:
            pos[j // 2] += 1
        else:
            pos[j // 2] -= 1
        i = j // 2
        if (i > 0 and pos[i - 1] >= pos[i]) or (i < n and pos[i] >= pos[i + 1]):
            raise RuntimeError("exclusion violated")


@nb.njit(cache=True, parallel=True)
def simulate_batch(init, p, slow_rate, keys, times):
    """Snapshots ``(R, T, n+1)`` of ``R`` independent systems at ``times``."""
    R, n1 = init.shape
    T = times.shape[0]
    out = np.empty((R, T, n1), dtype=np.int64)
    for r in nb.prange(R):
        pos = init[r].copy()
        state = np.empty(1, dtype=np.uint64)
        state[0] = keys[r]
        t = 0.0
        for j in range(T):
            t = _evolve(pos, p, slow_rate, state, t, times[j])
            out[r, j] = pos
    return out


def simulate(sys: AuxSystem, t: float, rng: np.random.Generator) -> AuxSystem:
    """The system at absolute time ``t`` (returns a new state)."""
    if t < sys.time:
        raise ValidationError("cannot simulate backwards in time")
    key = rng.integers(0, 2**63, size=1, dtype=np.uint64)
    out = simulate_batch(sys.positions[None, :].copy(), sys.p, sys.beta * sys.b, key, np.array([t - sys.time]))
    return AuxSystem(sys.n, sys.beta, sys.p, out[0, 0], t)


def run_stationary(n: int, beta: float, params, times, replicas: int, seed: int) -> np.ndarray:
    """Positions ``(replicas, T, n+1)`` started from the stationary spacing law."""
    p, q = _rates(params)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValidationError("times must be >= 0 and strictly increasing")
    init = positions_from_spacings(sample_spacings(n, beta, p, replicas, generator(seed, 0, "aux-init")))
    return simulate_batch(init, p, beta * (p - q), stream_keys(seed, replicas, "aux"), times)


def geometric_pmf(mu: float, m: np.ndarray) -> np.ndarray:
    return (1.0 - mu) * mu ** (np.asarray(m, dtype=float) - 1.0)


def spacing_tv(samples: np.ndarray, mu: float) -> float:
    """TV distance between the empirical law of a spacing and its geometric law."""
    samples = np.asarray(samples)
    top = int(samples.max())
    m = np.arange(1, top + 1)
    emp = np.bincount(samples, minlength=top + 1)[1:] / samples.size
    pmf = geometric_pmf(mu, m)
    tail = mu**top  # geometric mass beyond the largest observation
    return 0.5 * (float(np.abs(emp - pmf).sum()) + tail)


def spacing_chisquare(samples: np.ndarray, mu: float, min_expected: float = 5.0) -> float:
    """Chi-square goodness-of-fit p-value, pooling the tail so every bin expects ``min_expected``."""
    samples = np.asarray(samples)
    n = samples.size
    # last bin is {m >= M}; choose M so its expected count stays above min_expected
    M = max(2, int(math.floor(math.log(min_expected / n) / math.log(mu))) + 1)
    m = np.arange(1, M)
    exp_counts = np.append(n * geometric_pmf(mu, m), n * mu ** (M - 1))
    obs = np.append(np.bincount(np.minimum(samples, M), minlength=M + 1)[1:M], np.sum(samples >= M))
    return float(sstats.chisquare(obs, exp_counts).pvalue)


@dataclass
class SpacingReport:
    times: np.ndarray
    tv: np.ndarray  # (T, n)
    chi2_pvalues: np.ndarray  # (T, n)
    span_mean: np.ndarray  # (T,)
    span_se: np.ndarray
    span_expected: float
    replicas: int


def spacing_report(n: int, beta: float, params, times, replicas: int, seed: int) -> SpacingReport:
    """Compare spacing marginals and the mean span with their stationary values at each time."""
    pos = run_stationary(n, beta, params, times, replicas, seed)
    mu = mu_values(n, beta, params)
    sp = np.diff(pos, axis=-1)
    T = len(times)
    tv = np.array([[spacing_tv(sp[:, j, i], mu[i]) for i in range(n)] for j in range(T)])
    pv = np.array([[spacing_chisquare(sp[:, j, i], mu[i]) for i in range(n)] for j in range(T)])
    span = (pos[:, :, -1] - pos[:, :, 0]).astype(float)
    return SpacingReport(np.asarray(times, dtype=float), tv, pv, span.mean(axis=0),
                         span.std(axis=0, ddof=1) / math.sqrt(replicas), float(np.sum(1.0 / (1.0 - mu))), replicas)


@dataclass
class DeviationStats:
    t: float
    centered: np.ndarray  # eta_1(t) - t beta b per replica
    scale: float
    A_grid: np.ndarray
    fraction_below: np.ndarray
    quantiles: dict
    displacement_rates: np.ndarray  # mean displacement / t per particle
    displacement_se: np.ndarray


def deviation_stats(n: int, beta: float, params, t: float, replicas: int, seed: int, A_grid=None) -> DeviationStats:
    """Empirical law of the leftmost particle's position relative to the drift ``t beta b``.

    ``fraction_below[a]`` is the fraction of replicas with
    ``eta_1(t) - t beta b <= -A (sqrt(b t) + (n + log(min(n, 1/b)) / b) / (1 - beta))``.
    """
    if t < 1:
        raise ValidationError("deviation_stats needs t >= 1")
    p, q = _rates(params)
    b = p - q
    A_grid = np.asarray([1, 2, 5, 10, 20] if A_grid is None else A_grid, dtype=float)
    snap = run_stationary(n, beta, p, [0.0, t], replicas, seed)
    init, pos = snap[:, 0, :], snap[:, 1, :]
    centered = pos[:, 0] - t * beta * b
    scale = math.sqrt(b * t) + (n + math.log(min(n, 1.0 / b)) / b) / (1.0 - beta)
    frac = np.array([(centered <= -a * scale).mean() for a in A_grid])
    disp = (pos - init) / t
    qs = {str(qq): float(np.quantile(centered, qq)) for qq in (0.01, 0.05, 0.5, 0.95)}
    return DeviationStats(t, centered, scale, A_grid, frac, qs, disp.mean(axis=0),
                          disp.std(axis=0, ddof=1) / math.sqrt(replicas))
