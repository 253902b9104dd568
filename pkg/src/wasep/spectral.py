"""Discrete Hopf-Cole objects.

The profile ``a`` solves ``(sqrt(pq) Lap - rho) a = 0`` on ``1..N-1`` with
``a(0) = 1`` and ``a(N) = lam**((2k-N)/2)``. The eigenfunctions are

    f_j(h) = sum_x w_j(x) (lam**(h(x)/2) - a(x)) / (lam - 1),

with ``w_j(x) = sin(j x pi / N)`` (``w_0 = 1`` gives the contractive f0).

For weak bias both numerator terms are ``1 + O(lam - 1)`` and cancel, so we
never form them. We write ``(lam**(m/2) - 1)/(lam - 1)`` with ``expm1`` and
solve directly for ``c = (a - 1)/(lam - 1)``, which satisfies

    (sqrt(pq) Lap - rho) c = rho / (lam - 1) = q (sqrt p - sqrt q)/(sqrt p + sqrt q),
    c(0) = 0,  c(N) = (lam**((2k-N)/2) - 1)/(lam - 1).

At ``lam = 1`` this reduces to ``c(x) = (2k - N) x / (2N)`` and
``f_j(h) = sum w_j(x) (h(x)/2 - c(x))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .model import HeightFn, ModelParams, ValidationError, batch_stats

LAMBDA_ONE_TOL = 1e-8


def pow_ratio(m, log_lam: float):
    """``(lam**(m/2) - 1) / (lam - 1)`` for integer or real ``m``; ``m/2`` at ``lam = 1``."""
    m = np.asarray(m, dtype=float)
    if abs(math.expm1(log_lam)) < LAMBDA_ONE_TOL:
        return m / 2.0
    return np.expm1(0.5 * m * log_lam) / math.expm1(log_lam)


def _solve_bvp(params: ModelParams, rhs: float, left: float, right: float) -> np.ndarray:
    N = params.N
    s, rho = params.sqrt_pq, params.rho
    out = np.empty(N + 1)
    out[0], out[N] = left, right
    if N == 1:
        return out
    n = N - 1
    ab = np.zeros((3, n))
    ab[0, 1:] = s
    ab[1, :] = -2.0 * s - rho
    ab[2, :-1] = s
    b = np.full(n, rhs)
    b[0] -= s * left
    b[-1] -= s * right
    out[1:N] = solve_banded((1, 1), ab, b)
    return out


def solve_c(params: ModelParams) -> np.ndarray:
    """``(a - 1)/(lam - 1)`` on ``0..N``."""
    p, q = params.p, params.q
    rhs = q * (math.sqrt(p) - math.sqrt(q)) / (math.sqrt(p) + math.sqrt(q))
    right = float(pow_ratio(2 * params.k - params.N, params.log_lam))
    return _solve_bvp(params, rhs, 0.0, right)


def solve_a(params: ModelParams) -> np.ndarray:
    """The boundary-value profile ``a`` on ``0..N``."""
    if params.lam == 1.0:
        return np.ones(params.N + 1)
    return 1.0 + math.expm1(params.log_lam) * solve_c(params)


def gap_and_gammas(params: ModelParams) -> tuple[float, np.ndarray]:
    j = np.arange(1, params.N)
    gammas = params.rho + 4.0 * params.sqrt_pq * np.sin(j * np.pi / (2 * params.N)) ** 2
    return float(gammas[0]), gammas


@dataclass(frozen=True, eq=False)
class SpectralData:
    params: ModelParams
    a: np.ndarray
    c: np.ndarray
    gammas: np.ndarray
    gap: float
    rho: float
    delta_min_f0: float
    delta_min_f1: float

    def weights(self, j: int) -> np.ndarray:
        N = self.params.N
        if not 0 <= j <= N - 1:
            raise ValidationError(f"j must be in 0..{N - 1}, got {j}")
        x = np.arange(N + 1)
        if j == 0:
            w = np.ones(N + 1)
            w[0] = w[N] = 0.0
            return w
        return np.sin(j * x * np.pi / N)

    def gamma(self, j: int) -> float:
        return self.rho if j == 0 else float(self.gammas[j - 1])


def spectral_data(params: ModelParams) -> SpectralData:
    gap, gammas = gap_and_gammas(params)
    half = 0.5 * (params.k - params.N) * params.log_lam
    return SpectralData(
        params=params,
        a=solve_a(params),
        c=solve_c(params),
        gammas=gammas,
        gap=gap,
        rho=params.rho,
        delta_min_f0=math.exp(half),
        delta_min_f1=math.exp(half) * math.sin(math.pi / params.N),
    )


def _heights(h) -> np.ndarray:
    return h.heights if isinstance(h, HeightFn) else np.asarray(h)


def eval_f(j: int, h, sd: SpectralData):
    """Hopf-Cole function ``f_j`` at ``h``; vectorised over leading axes of a heights array."""
    H = _heights(h)
    u = pow_ratio(H, sd.params.log_lam) - sd.c
    return u @ sd.weights(j)


def _area_terms(h1: np.ndarray, h2: np.ndarray, sd: SpectralData) -> np.ndarray:
    P = sd.params
    ll = P.log_lam
    # lam^{(N-k)/2} (lam^{h1/2} - lam^{h2/2})/(lam-1) = lam^{(N-k+h2)/2} * ratio(h1-h2)
    scale = np.exp(0.5 * (P.N - P.k + h2) * ll)
    return scale * pow_ratio(h1 - h2, ll)


def _check_order(h1: np.ndarray, h2: np.ndarray) -> None:
    if np.any(h1 < h2):
        raise ValidationError("expected h2 <= h1 pointwise")


def weighted_area(h1, h2, sd: SpectralData):
    """``lam^{(N-k)/2} sum_x (lam^{h1/2} - lam^{h2/2})/(lam - 1)`` for ``h2 <= h1``.

    Equals ``(f0(h1) - f0(h2)) / delta_min(f0)``; every corner flip moves it by
    at least 1.
    """
    H1, H2 = _heights(h1), _heights(h2)
    _check_order(H1, H2)
    return _area_terms(H1, H2, sd).sum(axis=-1)


def h_statistic(h1, h2, sd: SpectralData):
    """Largest single-site term of :func:`weighted_area`."""
    H1, H2 = _heights(h1), _heights(h2)
    _check_order(H1, H2)
    return _area_terms(H1, H2, sd).max(axis=-1)


def difrence_bound_check(h1, h2, sd: SpectralData) -> bool:
    """Check ``(f0(h1) - f0(h2)) / delta_min(f0) <= N k lam**D_N(h1)`` for ``h2 <= h1``."""
    lhs, rhs = difrence_bound_sides(h1, h2, sd)
    return lhs <= rhs


def difrence_bound_sides(h1, h2, sd: SpectralData) -> tuple[float, float]:
    H1 = _heights(h1)
    P = sd.params
    occ = (np.diff(H1) + 1) // 2
    D = int(batch_stats(occ)["D"])
    lhs = float(weighted_area(h1, h2, sd))
    rhs = P.N * P.k * math.exp(D * P.log_lam)
    return lhs, rhs


def hopf_cole_field(h, sd: SpectralData) -> np.ndarray:
    """``H(x) = lam^{(N-k)/2} (lam^{h(x)/2} - a(x)) / (lam - 1)`` on ``0..N``."""
    P = sd.params
    H = _heights(h)
    return math.exp(0.5 * (P.N - P.k) * P.log_lam) * (pow_ratio(H, P.log_lam) - sd.c)


def lipschitz_decay_violations(h, sd: SpectralData) -> np.ndarray:
    """Sites ``x`` where ``H(x) - H(x-1) < -k^2 / (4N)``.

    The inequality is only claimed for large ``N``; callers record violations
    rather than assert on them.
    """
    P = sd.params
    inc = np.diff(hopf_cole_field(h, sd))[: P.N - 1]  # increments at x = 1..N-1
    return np.flatnonzero(inc < -P.k**2 / (4 * P.N)) + 1


def discrepancy_sites(h1, h2) -> int:
    """Number of sites in the discrepancy region where ``h2`` has a corner.

    The discrepancy region is the set of ``x`` in ``1..N-1`` with ``h1(y) > h2(y)``
    for some ``y`` in ``{x-1, x, x+1}``.
    """
    H1, H2 = _heights(h1), _heights(h2)
    gap = H1 > H2
    region = gap[:-2] | gap[1:-1] | gap[2:]
    corner = H2[:-2] == H2[2:]
    return int(np.sum(region & corner))


def exact_delta_min(values: np.ndarray, heights: np.ndarray) -> float:
    """Brute-force minimum of ``f(z') - f(z)`` over strictly ordered pairs ``z < z'``."""
    M = heights.shape[0]
    best = math.inf
    for i in range(M):
        le = np.all(heights[i] <= heights, axis=1)
        le[i] = False
        if le.any():
            best = min(best, float(np.min(values[le] - values[i])))
    return best
