"""Empirical checks of diffusion-type bounds for pure-jump supermartingales.

* absorption: a non-negative supermartingale with jump rate and amplitude at
  least 1, started at ``M0 <= a``, satisfies ``P[tau_0 >= a^2 u] <= 4 / sqrt(u)``;
* bracket: with jumps at most ``a - b``,
  ``P[<M>_{tau_b} >= (a - b)^2 u] <= 8 / sqrt(u)``;
* exponential moments: a martingale with jump rate at most ``B`` and jumps at
  most ``S`` has ``E exp(lam M_t) <= exp(B t (e^{lam S} - lam S - 1))``.

Large batches are kept in summarised form (:class:`TraceBatch`: start
value, hitting time, bracket at the hitting time) rather than as full
paths; :class:`JumpTrace` holds individual paths.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.special import logsumexp

from .dynamics import ensemble_init
from .model import ModelParams, ValidationError
from .rng import exponential, generator, stream_keys, uniform
from .spectral import spectral_data, weighted_area
from . import _engine

log = logging.getLogger(__name__)

Z95 = 1.959963984540054
MARGIN = 3.0


@dataclass
class JumpTrace:
    """A right-continuous piecewise-constant path: ``values[i]`` holds on ``[times[i], times[i+1])``."""

    times: np.ndarray
    values: np.ndarray
    bracket: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.size == 0:
            raise ValidationError("times and values must be non-empty and of equal length")
        if self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise ValidationError("event times must start at 0 and increase strictly")
        if self.bracket is not None:
            self.bracket = np.asarray(self.bracket, dtype=float)
            if self.bracket.shape != self.times.shape or np.any(np.diff(self.bracket) < 0):
                raise ValidationError("bracket must be non-decreasing and aligned with times")

    def value_at(self, t):
        i = np.searchsorted(self.times, t, side="right") - 1
        return self.values[i]

    def hitting_time(self, level: float = 0.0) -> float:
        """First time the path is ``<= level`` (``inf`` if never within the trace)."""
        hit = np.flatnonzero(self.values <= level)
        return float(self.times[hit[0]]) if hit.size else math.inf

    def bracket_at(self, t: float) -> float:
        if self.bracket is None:
            raise ValidationError("trace has no bracket")
        return float(self.bracket[np.searchsorted(self.times, t, side="right") - 1])

    def jumps(self) -> np.ndarray:
        return np.diff(self.values)


@dataclass
class TraceBatch:
    """Per-replica summaries: start value, hitting time of ``level``, bracket there.

    ``tau = inf`` means not hit before ``horizon``. ``min_jump``, ``max_jump``
    and ``min_rate`` describe the generating process (for precondition checks).
    """

    m0: np.ndarray
    tau: np.ndarray
    horizon: float
    level: float = 0.0
    bracket_tau: np.ndarray | None = None
    bracket_rate: float | None = None  # bracket growth per unit time, to bound censored values
    min_jump: float = 1.0
    max_jump: float = 1.0
    min_rate: float = 1.0
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.m0.size

    @classmethod
    def from_traces(cls, traces: list[JumpTrace], level: float = 0.0, min_rate: float = 1.0) -> "TraceBatch":
        m0 = np.array([tr.values[0] for tr in traces])
        tau = np.array([tr.hitting_time(level) for tr in traces])
        # absorbed paths are fully observed; only the others limit the horizon
        horizon = min((float(tr.times[-1]) for tr, t in zip(traces, tau) if not math.isfinite(t)),
                      default=math.inf)
        jumps = np.concatenate([np.abs(tr.jumps()) for tr in traces]) if traces else np.array([])
        br = None
        if all(tr.bracket is not None for tr in traces):
            br = np.array([tr.bracket_at(t) if math.isfinite(t) else math.inf for t, tr in zip(tau, traces)])
        return cls(m0, tau, horizon, level, br, None,
                   float(jumps.min()) if jumps.size else math.inf,
                   float(jumps.max()) if jumps.size else 0.0, min_rate)


@dataclass
class BoundTable:
    """Rows ``(x, empirical, ci, bound, pass)`` for a one-sided bound check."""

    x_name: str
    x: np.ndarray
    empirical: np.ndarray
    ci: np.ndarray
    bound: np.ndarray
    passed: np.ndarray
    replicas: int
    seed: int | None

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    def columns(self) -> list[str]:
        return [self.x_name, "empirical", "ci", "bound", "pass"]

    def rows(self):
        return [[float(a), float(b), float(c), float(d), bool(e)]
                for a, b, c, d, e in zip(self.x, self.empirical, self.ci, self.bound, self.passed)]

    def to_dict(self) -> dict:
        return {"columns": self.columns(), "rows": self.rows(), "replicas": self.replicas,
                "seed": self.seed, "all_passed": self.all_passed}


def _wilson_half(successes: np.ndarray, n: int) -> np.ndarray:
    from .estimators import proportion_ci

    return proportion_ci(successes, n)[1]


def _report(table: BoundTable, what: str) -> BoundTable:
    if not table.all_passed:
        bad = table.x[~table.passed]
        log.warning("%s bound violated at %s=%s; rows: %s", what, table.x_name, bad.tolist(), table.rows())
    return table


def check_absorption_bound(batch: TraceBatch, a: float | None, u_grid) -> BoundTable:
    """Empirical ``P[tau >= a^2 u]`` against ``4 / sqrt(u)``.

    With ``a=None`` each trace uses its own start value as ``a``.
    """
    u = np.asarray(u_grid, dtype=float)
    m0 = batch.m0
    if batch.level != 0:
        raise ValidationError("absorption check needs hitting times of 0")
    if np.any(m0 < 0):
        raise ValidationError(f"negative start value {m0.min()}")
    if batch.min_jump < 1 or batch.min_rate < 1:
        raise ValidationError(f"jump amplitude {batch.min_jump} / rate {batch.min_rate} below 1")
    aa = m0 if a is None else np.full(m0.shape, float(a))
    if a is not None and (a < 1 or np.any(m0 > a)):
        raise ValidationError(f"need a >= 1 and M0 <= a (max M0 = {m0.max()}, a = {a})")
    thr = aa[None, :] ** 2 * u[:, None]
    if np.any((thr > batch.horizon) & ~np.isfinite(batch.tau)[None, :]):
        raise ValidationError(f"horizon {batch.horizon} shorter than the largest threshold {thr.max()}")
    exceed = (batch.tau[None, :] >= thr).sum(axis=1)
    n = batch.replicas
    emp = exceed / n
    ci = _wilson_half(exceed, n)
    bound = 4.0 / np.sqrt(u)
    return _report(BoundTable("u", u, emp, ci, bound, emp - MARGIN * ci <= bound, n, batch.seed), "absorption")


def check_bracket_bound(batch: TraceBatch, a: float, b: float, u_grid) -> BoundTable:
    """Empirical ``P[<M>_{tau_b} >= (a - b)^2 u]`` against ``8 / sqrt(u)``."""
    if batch.bracket_tau is None:
        raise ValidationError("bracket check needs brackets at the hitting time")
    if b > a:
        raise ValidationError("need b <= a")
    if batch.level != b:
        raise ValidationError(f"batch records hitting of {batch.level}, not b = {b}")
    if np.any(batch.m0 > a):
        raise ValidationError("need M0 <= a")
    if batch.max_jump > a - b:
        raise ValidationError(f"jump amplitude {batch.max_jump} exceeds a - b = {a - b}")
    u = np.asarray(u_grid, dtype=float)
    thr = (a - b) ** 2 * u
    if batch.bracket_rate is not None and np.any(~np.isfinite(batch.tau)):
        if thr.max() > batch.bracket_rate * batch.horizon:
            raise ValidationError("horizon too short to decide the largest bracket threshold")
    exceed = (batch.bracket_tau[None, :] >= thr[:, None]).sum(axis=1)
    n = batch.replicas
    emp = exceed / n
    ci = _wilson_half(exceed, n)
    bound = 8.0 / np.sqrt(u)
    return _report(BoundTable("u", u, emp, ci, bound, emp - MARGIN * ci <= bound, n, batch.seed), "bracket")


# --- test processes -------------------------------------------------------


@nb.njit(cache=True, parallel=True)
def _walk_hitting(m0, up, down, jump, level, keys, t_max):
    R = keys.shape[0]
    tau = np.empty(R)
    rate = up + down
    for r in nb.prange(R):
        state = np.empty(1, dtype=np.uint64)
        state[0] = keys[r]
        x = m0
        t = 0.0
        while x > level:
            t += exponential(state, rate)
            if t > t_max:
                t = np.inf
                break
            if uniform(state) * rate < up:
                x += jump
            else:
                x -= jump
        tau[r] = t
    return tau


def walk_batch(m0: float, replicas: int, seed: int, t_max: float, up: float = 0.5, down: float = 0.5,
               jump: float = 1.0, level: float = 0.0) -> TraceBatch:
    """Hitting times of ``level`` for the walk with ``+jump`` at rate ``up`` and ``-jump`` at rate ``down``.

    The walk is a supermartingale when ``up <= down``; its martingale part has
    bracket ``(up + down) jump^2 t``.
    """
    if up > down:
        raise ValidationError("walk must be a supermartingale (up <= down)")
    keys = stream_keys(seed, replicas, "walk")
    tau = _walk_hitting(float(m0), up, down, jump, level, keys, float(t_max))
    rate = up + down
    return TraceBatch(np.full(replicas, float(m0)), tau, float(t_max), level, rate * jump**2 * tau, rate * jump**2,
                      jump, jump, rate, seed, {"process": "walk", "up": up, "down": down, "jump": jump})


def walk_trace(m0: float, rng: np.random.Generator, t_max: float, up: float = 0.5, down: float = 0.5,
               jump: float = 1.0) -> JumpTrace:
    """One full path of the walk, absorbed at 0, up to ``t_max``."""
    rate = up + down
    times, values = [0.0], [float(m0)]
    t, x = 0.0, float(m0)
    while x > 0:
        t += rng.exponential(1.0 / rate)
        if t > t_max:
            break
        x += jump if rng.random() * rate < up else -jump
        times.append(t)
        values.append(x)
    times = np.asarray(times)
    return JumpTrace(times, np.asarray(values), rate * jump**2 * times)


def wasep_area_batch(params: ModelParams, replicas: int, seed: int, t_max: float = math.inf) -> TraceBatch:
    """Weighted area between the chain from the maximum and a coupled equilibrium chain.

    The area is a non-negative supermartingale whose jumps are at least 1; until
    absorption some discrepancy corner rings at rate at least ``q``, so time is
    rescaled by ``q`` to make the jump rate at least 1.
    """
    init = ensemble_init(params, ["max", "pi"], replicas, seed)
    sd = spectral_data(params)
    m0 = weighted_area(init[:, 0, :], init[:, 1, :], sd)
    tau = _engine.merge_ensemble(init, params.p, stream_keys(seed, replicas, "area"), float(t_max))
    q = params.q
    return TraceBatch(m0, q * tau, q * t_max, 0.0, None, None, 1.0, math.inf, 1.0, seed,
                      {"process": "wasep-area", "N": params.N, "k": params.k, "p": params.p, "time_scale": q})


# --- exponential moments --------------------------------------------------


@dataclass
class ExpoMomentTable:
    lam: np.ndarray
    log_empirical: np.ndarray
    log_ci: np.ndarray  # bootstrap standard deviation of the log-moment
    log_bound: np.ndarray
    passed: np.ndarray
    replicas: int
    seed: int | None

    @property
    def empirical(self) -> np.ndarray:
        return np.exp(self.log_empirical)

    @property
    def bound(self) -> np.ndarray:
        return np.exp(self.log_bound)

    def columns(self) -> list[str]:
        return ["lambda", "empirical", "ci", "bound", "pass"]

    def rows(self):
        return [[float(a), float(b), float(c), float(d), bool(e)] for a, b, c, d, e in
                zip(self.lam, self.empirical, self.empirical * self.log_ci, self.bound, self.passed)]


def log_mean_exp(x: np.ndarray, axis=-1) -> np.ndarray:
    return logsumexp(x, axis=axis) - math.log(np.shape(x)[axis])


def bootstrap_log_mean_exp(x: np.ndarray, rng: np.random.Generator, resamples: int = 1000, chunk: int = 50) -> float:
    """Bootstrap standard deviation of ``log mean exp(x)``."""
    n = x.size
    out = []
    for start in range(0, resamples, chunk):
        m = min(chunk, resamples - start)
        idx = rng.integers(0, n, size=(m, n))
        out.append(log_mean_exp(x[idx], axis=1))
    return float(np.std(np.concatenate(out), ddof=1))


def expo_bound_log(lam, B: float, S, t: float) -> np.ndarray:
    """``B t (e^{lam S} - lam S - 1)`` for constant ``S`` (log of the moment bound)."""
    x = np.asarray(lam, dtype=float) * S
    return B * t * (np.expm1(x) - x)


def check_expo_moment(samples: np.ndarray, lambda_grid, B: float, S: float, t: float,
                      seed: int = 0, resamples: int = 1000) -> ExpoMomentTable:
    """Empirical ``E exp(lam M_t)`` (log-space, bootstrap CI) against the jump-size bound."""
    x = np.asarray(samples, dtype=float)
    lam = np.asarray(lambda_grid, dtype=float)
    rng = generator(seed, 0, "bootstrap")
    emp = np.array([log_mean_exp(l * x) for l in lam])
    ci = np.array([bootstrap_log_mean_exp(l * x, rng, resamples) if l != 0 else 0.0 for l in lam])
    bound = expo_bound_log(lam, B, S, t)
    passed = emp - MARGIN * ci <= bound + 1e-12
    tab = ExpoMomentTable(lam, emp, ci, bound, passed, x.size, seed)
    if not passed.all():
        log.warning("exponential-moment bound violated at lambda=%s", lam[~passed].tolist())
    return tab


def compensated_poisson(t: float, replicas: int, seed: int, rate: float = 1.0) -> np.ndarray:
    """Samples of ``N_t - rate t`` for a rate-``rate`` Poisson process."""
    return generator(seed, 0, "poisson").poisson(rate * t, size=replicas) - rate * t


def quadratic_form_holds(lam, S, B: float = 1.0, t: float = 1.0) -> bool:
    """Whether the jump-size bound is below ``exp(B e lam^2 S^2 t)`` wherever ``lam S <= 1``."""
    x = np.asarray(lam, dtype=float) * np.asarray(S, dtype=float)
    sel = np.abs(x) <= 1
    return bool(np.all(expo_bound_log(x[sel], B, 1.0, t) <= B * math.e * x[sel] ** 2 * t))


def expo_taylor_check(n: int = 100_000, lo: float = -50.0, hi: float = 50.0) -> tuple[bool, float]:
    """Grid check of ``e^{-x} + x - 1 >= min(1, x^2)/4``; returns (all hold, smallest slack)."""
    x = np.linspace(lo, hi, n)
    lhs = np.expm1(-x) + x
    slack = lhs - np.minimum(1.0, x**2) / 4.0
    return bool(np.all(slack >= 0)), float(slack.min())


@dataclass
class SubmartingaleRow:
    lam: float
    before: float
    after: float
    se: float
    passed: bool


def check_submartingale(lams, t: float, s: float, replicas: int, seed: int) -> list[SubmartingaleRow]:
    """``E exp(-lam M_{t+s} - lam^2 (t+s)/4) >= E exp(-lam M_t - lam^2 t/4) - 3 se`` for the unit walk.

    The walk jumps +-1 at total rate 1; the increment over ``s`` is independent
    of ``M_t``, so paired samples are exact.
    """
    rng = generator(seed, 0, "submartingale")
    m_t = rng.poisson(t / 2, replicas) - rng.poisson(t / 2, replicas)
    m_ts = m_t + rng.poisson(s / 2, replicas) - rng.poisson(s / 2, replicas)
    rows = []
    for lam in lams:
        a = np.exp(-lam * m_t - lam**2 * t / 4)
        b = np.exp(-lam * m_ts - lam**2 * (t + s) / 4)
        d = b - a
        se = float(d.std(ddof=1) / math.sqrt(replicas))
        rows.append(SubmartingaleRow(float(lam), float(a.mean()), float(b.mean()), se, bool(d.mean() >= -MARGIN * se)))
    return rows
