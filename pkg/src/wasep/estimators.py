"""Monte Carlo bounds on the total-variation distance to equilibrium.

Upper bound: the probability that the coupled extremal chains have not yet
merged dominates ``d(t)``. Lower bound: with ``f`` the first Hopf-Cole
eigenfunction (mean zero under equilibrium), a second-moment argument gives

    d(t) >= 1 - 2 (Var_t f + Var_pi f) / (E_t f)^2

for the law at time ``t`` from either extremal start. Both are reported
with 95% intervals; brackets on the mixing time use a 3-interval margin.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ensemble_chunks, merging_times, run_ensemble, wilson_interval
from .equilibrium import DEFAULT_CAP, EquilibriumSampler, exact_pi
from .hydro import ell_r, g
from .model import ModelParams, ValidationError, batch_stats
from .rng import generator
from .spectral import eval_f, spectral_data

log = logging.getLogger(__name__)

TIMEOUT = "TIMEOUT"
Z95 = 1.959963984540054
MARGIN = 3.0


def default_grid(params: ModelParams, n: int = 40) -> np.ndarray:
    """Geometric grid over ``[0.1/gap, 10 log k / gap]`` (``log k`` floored at 1)."""
    lk = max(math.log(params.k), 1.0)
    return np.geomspace(0.1 / params.gap, 10.0 * lk / params.gap, n)


def proportion_ci(successes, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Point estimate and the larger side of the Wilson 95% interval."""
    s = np.asarray(successes, dtype=float)
    lo, hi = wilson_interval(s, n, Z95)
    phat = s / n
    return phat, np.maximum(phat - lo, hi - phat)


@dataclass
class MixBoundCurve:
    """Upper and/or lower bounds on ``d(t)`` over a time grid."""

    params: ModelParams
    t: np.ndarray
    seed: int
    upper: np.ndarray | None = None
    upper_ci: np.ndarray | None = None
    lower: np.ndarray | None = None
    lower_ci: np.ndarray | None = None
    replicas_upper: int = 0
    replicas_lower: int = 0
    d_exact: np.ndarray | None = None
    extras: dict = field(default_factory=dict, repr=False)

    def columns(self) -> list[str]:
        cols = ["t", "upper", "upper_ci", "lower", "lower_ci"]
        return cols + (["d_exact"] if self.d_exact is not None else [])

    def rows(self):
        nan = np.full(self.t.shape, np.nan)
        cols = [self.t,
                nan if self.upper is None else self.upper,
                nan if self.upper_ci is None else self.upper_ci,
                nan if self.lower is None else self.lower,
                nan if self.lower_ci is None else self.lower_ci]
        if self.d_exact is not None:
            cols.append(self.d_exact)
        return [list(map(float, r)) for r in zip(*cols)]

    def merge(self, other: "MixBoundCurve") -> "MixBoundCurve":
        """Combine an upper-only and a lower-only curve on the same grid."""
        if not np.array_equal(self.t, other.t):
            raise ValidationError("curves are on different grids")
        up, lo = (self, other) if self.upper is not None else (other, self)
        return MixBoundCurve(self.params, self.t, self.seed, up.upper, up.upper_ci, lo.lower, lo.lower_ci,
                             up.replicas_upper, lo.replicas_lower, self.d_exact if self.d_exact is not None else other.d_exact,
                             {**up.extras, **lo.extras})


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValidationError("t_grid must be a non-empty strictly increasing array of times >= 0")
    return t


def coupling_upper(params: ModelParams, t_grid, replicas: int, seed: int, taus: np.ndarray | None = None) -> MixBoundCurve:
    """Fraction of replicas whose extremal chains are still apart at each ``t``.

    Merging is absorbing, so this is the empirical survival function of the
    merging time, simulated up to the last grid time.
    """
    if replicas < 100:
        raise ValidationError("coupling_upper needs replicas >= 100")
    t = _check_grid(t_grid)
    if taus is None:
        taus = merging_times(params, replicas, seed, float(t[-1]))
    alive = (taus[None, :] > t[:, None]).sum(axis=1)
    est, ci = proportion_ci(alive, replicas)
    return MixBoundCurve(params, t, seed, upper=est, upper_ci=ci, replicas_upper=replicas, extras={"taus": taus})


def pi_moments(params: ModelParams, seed: int, samples: int = 10_000, cap: int = DEFAULT_CAP) -> tuple[float, float, int]:
    """``(Var_pi f1, 4th central moment, n)`` of the first eigenfunction; ``n = 0`` when exact."""
    sd = spectral_data(params)
    if params.n_states <= cap:
        table = exact_pi(params, cap)
        f = eval_f(1, table.heights(), sd)
        mu = table.expect(f)
        return table.expect((f - mu) ** 2), table.expect((f - mu) ** 4), 0
    sampler = EquilibriumSampler(params)
    occ = sampler.sample(samples, generator(seed, 0, "pi-moments"))
    if sampler.approximate:
        log.warning("equilibrium variance estimated from approximate (MCMC) samples")
    H = np.concatenate([np.zeros((samples, 1), dtype=np.int64), np.cumsum(2 * occ.astype(np.int64) - 1, axis=1)], axis=1)
    f = eval_f(1, H, sd)
    d = f - f.mean()
    return float(np.mean(d**2) * samples / (samples - 1)), float(np.mean(d**4)), samples


def _moment_bound(vals: np.ndarray, var_pi: float, m4_pi: float, n_pi: int) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in second-moment bound and its delta-method 95% half-width.

    ``vals`` has shape ``(replicas, T)``. The equilibrium mean of ``f`` is 0
    exactly, so only the time-``t`` mean is estimated.
    """
    n = vals.shape[0]
    E = vals.mean(axis=0)
    d = vals - E
    V = (d**2).sum(axis=0) / (n - 1)
    m3 = np.mean(d**3, axis=0)
    m4 = np.mean(d**4, axis=0)
    S = V + var_pi
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(E != 0, 1.0 - 2.0 * S / E**2, -np.inf)
        dE = 4.0 * S / E**3
        dV = -2.0 / E**2
        var = dE**2 * V / n + dV**2 * np.maximum(m4 - V**2, 0.0) / n + 2 * dE * dV * m3 / n
        if n_pi:
            var = var + dV**2 * max(m4_pi - var_pi**2, 0.0) / n_pi
        half = Z95 * np.sqrt(np.maximum(var, 0.0))
    # once E is small the bound is clamped at 0 and the linearisation is meaningless
    half = np.where(np.isfinite(half), np.minimum(half, 1.0), 1.0)
    return np.clip(bound, 0.0, 1.0), np.maximum(half, 0.5 / n)


def wilson_lower(params: ModelParams, t_grid, replicas: int, seed: int, pi_samples: int = 10_000,
                 stop_below: float | None = None, chunk: int = 8) -> MixBoundCurve:
    """Second-moment lower bound on ``d(t)``, the larger over both extremal starts.

    With ``stop_below`` the simulation stops once ``lower + 3 CI`` drops
    under that level (or a whole chunk of the bound is clamped at 0); the
    remaining grid points are NaN.
    """
    if replicas < 1000:
        raise ValidationError("wilson_lower needs replicas >= 1000")
    t = _check_grid(t_grid)
    sd = spectral_data(params)
    var_pi, m4_pi, n_pi = pi_moments(params, seed, pi_samples)
    if stop_below is None:
        parts = [(t, run_ensemble(params, ["max", "min"], t, replicas, seed).heights)]
    else:
        parts = ensemble_chunks(params, ["max", "min"], t, replicas, seed, chunk)
    lows, cis, fs = [], [], []
    for _, heights in parts:
        f = eval_f(1, heights.astype(np.int64), sd)  # (R, T, 2)
        bounds = [_moment_bound(f[:, :, c], var_pi, m4_pi, n_pi) for c in range(2)]
        pick = bounds[0][0] >= bounds[1][0]
        lows.append(np.where(pick, bounds[0][0], bounds[1][0]))
        cis.append(np.where(pick, bounds[0][1], bounds[1][1]))
        fs.append(f)
        # E_t f decays like exp(-gap t), so once a whole chunk is clamped at 0 nothing later can certify
        if stop_below is not None and (lows[-1][-1] + MARGIN * cis[-1][-1] < stop_below or np.all(lows[-1] == 0)):
            break
    f = np.concatenate(fs, axis=1)
    pad = t.size - f.shape[1]
    lower = np.concatenate(lows + [np.full(pad, np.nan)])
    ci = np.concatenate(cis + [np.full(pad, np.nan)])
    extras = {"mean_f1": f.mean(axis=0), "var_f1": f.var(axis=0, ddof=1), "var_pi": var_pi}
    return MixBoundCurve(params, t, seed, lower=lower, lower_ci=ci, replicas_lower=replicas, extras=extras)


@dataclass
class MixBracket:
    """``T_lower <= T_mix(eps) <= T_upper``; ``inf``/``nan`` with a flag when a curve never crosses."""

    eps: float
    t_lower: float
    t_upper: float
    lower_timeout: bool
    upper_timeout: bool
    curve: MixBoundCurve

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "t_lower": TIMEOUT if self.lower_timeout else self.t_lower,
            "t_upper": TIMEOUT if self.upper_timeout else self.t_upper,
        }


def upper_crossing(taus: np.ndarray, eps: float, horizon: float) -> float:
    """First ``t <= horizon`` where the empirical survival plus 3 CI is at most ``eps``; ``inf`` if none.

    The survival function only moves at merge times, so the search runs over
    the sorted merge times exactly rather than over a grid.
    """
    n = taus.size
    finite = np.sort(taus[np.isfinite(taus) & (taus <= horizon)])
    alive = n - np.arange(1, finite.size + 1)
    est, ci = proportion_ci(alive, n)
    ok = np.flatnonzero(est + MARGIN * ci <= eps)
    return float(finite[ok[0]]) if ok.size else math.inf


def lower_crossing(curve: MixBoundCurve, eps: float) -> tuple[float, bool]:
    """Last grid time where lower minus 3 CI is still at least ``eps``.

    Returns ``(0.0, False)`` when it never is (``0`` is then the only certified
    lower bound), and ``(t_last, True)`` when the curve is still above at the
    horizon.
    """
    with np.errstate(invalid="ignore"):
        ok = curve.lower - MARGIN * curve.lower_ci >= eps
    if not ok.any():
        return 0.0, False
    last = int(np.flatnonzero(ok)[-1])
    return float(curve.t[last]), last == int(np.flatnonzero(np.isfinite(curve.lower))[-1])


def mix_bounds(params: ModelParams, t_grid, eps_list, replicas: int, seed: int, lower_replicas: int | None = None,
               pi_samples: int = 10_000, truncate_lower: bool = True) -> tuple[MixBoundCurve, list[MixBracket]]:
    """Both bound curves on ``t_grid`` and a mixing-time bracket for each ``eps``.

    With ``truncate_lower`` the lower curve is only simulated up to the
    largest finite ``T_upper`` (it cannot certify anything beyond it); later
    grid points are left as NaN.
    """
    eps_list = [float(e) for e in np.atleast_1d(eps_list)]
    if any(not 0 < e < 1 for e in eps_list):
        raise ValidationError("eps must be in (0, 1)")
    t = _check_grid(t_grid)
    horizon = float(t[-1])
    up = coupling_upper(params, t, replicas, seed)
    taus = up.extras["taus"]
    t_ups = [upper_crossing(taus, e, horizon) for e in eps_list]
    t_low_grid = t
    if truncate_lower and all(math.isfinite(x) for x in t_ups):
        t_low_grid = t[t <= max(t_ups)]
        if t_low_grid.size == 0:
            t_low_grid = t[:1]
    lo = wilson_lower(params, t_low_grid, lower_replicas or replicas, seed, pi_samples, stop_below=min(eps_list))
    pad = t.size - t_low_grid.size
    curve = MixBoundCurve(params, t, seed, up.upper, up.upper_ci,
                          np.concatenate([lo.lower, np.full(pad, np.nan)]),
                          np.concatenate([lo.lower_ci, np.full(pad, np.nan)]),
                          up.replicas_upper, lo.replicas_lower, extras={"taus": taus, **lo.extras})
    brackets = []
    for e, t_up in zip(eps_list, t_ups):
        t_low, lower_timeout = lower_crossing(lo, e)
        if lower_timeout and np.isfinite(curve.lower).sum() < t.size:
            lower_timeout = False  # the lower curve was cut short on purpose
        brackets.append(MixBracket(e, t_low, t_up, lower_timeout, not math.isfinite(t_up), curve))
    return curve, brackets


def mix_time_bracket(params: ModelParams, eps: float, replicas: int, seed: int, t_grid=None,
                     lower_replicas: int | None = None, pi_samples: int = 10_000) -> MixBracket:
    """Bracket ``T_mix(eps)`` between the moment lower bound and the coupling upper bound."""
    t = default_grid(params, 200) if t_grid is None else t_grid
    return mix_bounds(params, t, [eps], replicas, seed, lower_replicas, pi_samples)[1][0]


@dataclass
class HydroResult:
    t: np.ndarray
    distances: np.ndarray  # (replicas, T)

    @property
    def median(self) -> np.ndarray:
        return np.median(self.distances, axis=0)

    @property
    def q90(self) -> np.ndarray:
        return np.quantile(self.distances, 0.9, axis=0)


def _macro_time(params: ModelParams, t_list) -> np.ndarray:
    t = np.asarray(t_list, dtype=float)
    if params.b == 0:
        raise ValidationError("macroscopic time needs b > 0")
    if params.N * params.b < 10:
        log.warning("N b = %.3g is not large; hydrodynamic comparisons are rough", params.N * params.b)
    return t * params.N / params.b


def hydro_distance(params: ModelParams, t_list, replicas: int, seed: int) -> HydroResult:
    """Sup-norm distance between the rescaled height from the maximum and the macroscopic profile."""
    t = _check_grid(t_list)
    rec = run_ensemble(params, ["max"], _macro_time(params, t), replicas, seed)
    N = params.N
    x = np.arange(N + 1) / N
    alpha = params.k / N
    prof = np.stack([g(alpha, ti, x) for ti in t])  # (T, N+1)
    dist = np.abs(rec.heights[:, :, 0, :] / N - prof[None]).max(axis=-1)
    return HydroResult(t, dist)


@dataclass
class BoundaryResult:
    t: np.ndarray
    L_mean: np.ndarray
    L_ci: np.ndarray
    R_mean: np.ndarray
    R_ci: np.ndarray
    ell: np.ndarray
    r: np.ndarray
    replicas: int


def boundary_scaling(params: ModelParams, t_list, replicas: int, seed: int) -> BoundaryResult:
    """Rescaled ends of the region where the chain from the maximum is above the minimum."""
    t = _check_grid(t_list)
    rec = run_ensemble(params, ["max"], _macro_time(params, t), replicas, seed)
    s = batch_stats(rec.occupancies()[:, :, 0, :])
    N = params.N
    L, R = s["L"] / N, s["R"] / N

    def mean_ci(a):
        m = a.mean(axis=0)
        sd = a.std(axis=0, ddof=1) if replicas > 1 else np.zeros_like(m)
        return m, Z95 * sd / math.sqrt(replicas)

    ell, r = ell_r(params.k / N, t)
    Lm, Lc = mean_ci(L)
    Rm, Rc = mean_ci(R)
    return BoundaryResult(t, Lm, Lc, Rm, Rc, np.atleast_1d(ell), np.atleast_1d(r), replicas)


def extremal_tv_gap(d_all: np.ndarray, d_extremal: np.ndarray) -> float:
    """Largest shortfall of the extremal-start TV against the all-start worst case."""
    return float(np.max(np.asarray(d_all) - np.asarray(d_extremal)))


__all__ = [
    "TIMEOUT",
    "BoundaryResult",
    "HydroResult",
    "MixBoundCurve",
    "MixBracket",
    "boundary_scaling",
    "coupling_upper",
    "default_grid",
    "hydro_distance",
    "mix_bounds",
    "mix_time_bracket",
    "pi_moments",
    "wilson_lower",
]
