"""Closed-form macroscopic profiles for the maximal initial condition.

Space is rescaled by ``N``, height by ``N`` and time by ``N / b``. With
particle density ``alpha`` the rescaled height started from the maximal
profile follows :func:`g`, and the region where it differs from the minimal
profile is ``[ell(t), r(t)]`` (see :func:`ell_r`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ValidationError


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")


def vee_alpha(alpha: float, x):
    """Rescaled minimal profile ``max(-x, x - 2(1 - alpha))``."""
    x = np.asarray(x, dtype=float)
    return np.maximum(-x, x - 2.0 * (1.0 - alpha))


def wedge_alpha(alpha: float, x):
    """Rescaled maximal profile ``min(x, 2 alpha - x)``."""
    x = np.asarray(x, dtype=float)
    return np.minimum(x, 2.0 * alpha - x)


def fixation_time(alpha: float) -> float:
    """Macroscopic time after which the profile sits at the minimum."""
    return (np.sqrt(alpha) + np.sqrt(1.0 - alpha)) ** 2


def g0(alpha: float, t, x):
    """Rarefaction-fan solution before clipping at the minimal profile.

    Inside ``|x - alpha| <= t`` it is the parabola
    ``alpha - t/2 - (x - alpha)^2 / (2t)``; outside, the maximal profile. The
    outside branch wins on the boundary ``|x - alpha| = t``, which makes
    ``t = 0`` well defined.
    """
    _check_alpha(alpha)
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    if np.any(t < 0):
        raise ValidationError("t must be >= 0")
    inside = np.abs(x - alpha) < t
    safe_t = np.where(inside, t, 1.0)
    fan = alpha - t / 2.0 - (x - alpha) ** 2 / (2.0 * safe_t)
    out = np.where(inside, fan, wedge_alpha(alpha, x))
    return out if out.ndim else float(out)


def g(alpha: float, t, x):
    """Macroscopic height profile ``max(vee_alpha(x), g0(t, x))``."""
    out = np.maximum(vee_alpha(alpha, x), g0(alpha, t, x))
    return out if np.ndim(out) else float(out)


def ell_r(alpha: float, t):
    """Left and right ends ``(ell, r)`` of the region where the profile is above the minimum."""
    _check_alpha(alpha)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("t must be >= 0")
    tf = fixation_time(alpha)
    st = np.sqrt(t)
    ell = np.where(t <= alpha, 0.0, np.where(t < tf, (st - np.sqrt(alpha)) ** 2, 1.0 - alpha))
    r = np.where(t <= 1.0 - alpha, 1.0, np.where(t < tf, 1.0 - (st - np.sqrt(1.0 - alpha)) ** 2, 1.0 - alpha))
    if ell.ndim == 0:
        return float(ell), float(r)
    return ell, r


@dataclass(frozen=True)
class MacroProfile:
    """Evaluators bound to a fixed density ``alpha``."""

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    def g(self, t, x):
        return g(self.alpha, t, x)

    def ell_r(self, t):
        return ell_r(self.alpha, t)

    def vee(self, x):
        return vee_alpha(self.alpha, x)

    def wedge(self, x):
        return wedge_alpha(self.alpha, x)

    @property
    def fixation_time(self) -> float:
        return fixation_time(self.alpha)

    def grid(self, t_list, n_x: int = 101) -> np.ndarray:
        """Rows ``(t, x, g)`` over ``t_list`` and a uniform ``x`` grid, for plotting."""
        x = np.linspace(0.0, 1.0, n_x)
        rows = [np.column_stack([np.full(n_x, t), x, self.g(t, x)]) for t in t_list]
        return np.vstack(rows)
