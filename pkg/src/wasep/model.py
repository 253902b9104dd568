"""Model constants, state representations and configuration statistics.

Sites are indexed ``1..N`` and heights ``0..N``. A configuration is stored
as a 0/1 occupancy vector (array index ``x-1`` holds site ``x``); its
height function is ``h(x) = sum_{y<=x} (2*xi(y) - 1)``.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class ValidationError(ValueError):
    """Raised when a value violates a model invariant."""


@dataclass(frozen=True)
class ModelParams:
    """Segment length ``N``, particle count ``k`` and right-jump rate ``p``."""

    N: int
    k: int
    p: float

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 2:
            raise ValidationError(f"N must be an integer >= 2, got {self.N!r}")
        if isinstance(self.k, bool) or int(self.k) != self.k or not 1 <= self.k <= self.N - 1:
            raise ValidationError(f"k must be an integer in [1, N-1], got {self.k!r}")
        if not (0.5 <= float(self.p) < 1.0):
            raise ValidationError(f"p must satisfy 1/2 <= p < 1, got {self.p!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "p", float(self.p))

    @classmethod
    def from_bias(cls, N: int, k: int, b: float) -> "ModelParams":
        return cls(N, k, (1.0 + b) / 2.0)

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def b(self) -> float:
        return self.p - self.q

    @property
    def lam(self) -> float:
        return self.p / self.q

    @property
    def log_lam(self) -> float:
        return math.log(self.p) - math.log(self.q)

    @property
    def rho(self) -> float:
        return (math.sqrt(self.p) - math.sqrt(self.q)) ** 2

    @property
    def sqrt_pq(self) -> float:
        return math.sqrt(self.p * self.q)

    def gamma(self, j: int) -> float:
        """Decay rate of the j-th Hopf-Cole eigenfunction."""
        return self.rho + 4.0 * self.sqrt_pq * math.sin(j * math.pi / (2 * self.N)) ** 2

    @property
    def gap(self) -> float:
        return self.gamma(1)

    @property
    def n_states(self) -> int:
        return math.comb(self.N, self.k)

    def to_json(self) -> str:
        return json.dumps({"N": self.N, "k": self.k, "p": self.p})

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        d = json.loads(text)
        if set(d) != {"N", "k", "p"}:
            raise ValidationError(f"expected keys N, k, p; got {sorted(d)}")
        return cls(d["N"], d["k"], d["p"])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParticleConfig:
    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        if occ.ndim != 1 or occ.size < 2:
            raise ValidationError("occupancy must be a 1-d vector of length >= 2")
        if not np.all((occ == 0) | (occ == 1)):
            raise ValidationError("occupancy entries must be 0 or 1")
        k = int(occ.sum())
        if not 1 <= k <= occ.size - 1:
            raise ValidationError(f"particle count must be in [1, N-1], got {k}")
        object.__setattr__(self, "occupancy", _frozen(occ.astype(np.int8)))

    @classmethod
    def from_string(cls, s: str) -> "ParticleConfig":
        s = s.strip()
        if not s or set(s) - {"0", "1"}:
            raise ValidationError(f"not a 0/1 string: {s!r}")
        return cls(np.frombuffer(s.encode(), dtype=np.uint8) - ord("0"))

    @classmethod
    def from_positions(cls, N: int, positions) -> "ParticleConfig":
        occ = np.zeros(N, dtype=np.int8)
        pos = np.asarray(list(positions), dtype=int)
        if pos.size and (pos.min() < 1 or pos.max() > N or np.unique(pos).size != pos.size):
            raise ValidationError(f"invalid positions {positions!r} for N={N}")
        occ[pos - 1] = 1
        return cls(occ)

    @property
    def N(self) -> int:
        return self.occupancy.size

    @property
    def k(self) -> int:
        return int(self.occupancy.sum())

    @cached_property
    def positions(self) -> np.ndarray:
        """Sorted particle positions (1-based)."""
        return np.flatnonzero(self.occupancy) + 1

    @cached_property
    def height(self) -> "HeightFn":
        return to_height(self)

    def check(self, params: ModelParams) -> None:
        if self.N != params.N or self.k != params.k:
            raise ValidationError(f"config has (N,k)=({self.N},{self.k}), expected ({params.N},{params.k})")

    def __str__(self) -> str:
        return "".join("1" if v else "0" for v in self.occupancy)

    def __eq__(self, other):
        if not isinstance(other, ParticleConfig):
            return NotImplemented
        return np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())


@dataclass(frozen=True, eq=False)
class HeightFn:
    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights)
        if h.ndim != 1 or h.size < 3:
            raise ValidationError("heights must be a 1-d vector of length N+1 >= 3")
        if h[0] != 0:
            raise ValidationError("h(0) must be 0")
        if not np.all(np.abs(np.diff(h)) == 1):
            raise ValidationError("height increments must be +-1")
        N = h.size - 1
        if not -N < h[-1] < N:
            raise ValidationError("height function must contain both particles and holes")
        object.__setattr__(self, "heights", _frozen(h.astype(np.int64)))

    @property
    def N(self) -> int:
        return self.heights.size - 1

    @property
    def k(self) -> int:
        return (int(self.heights[-1]) + self.N) // 2

    def __getitem__(self, x):
        return self.heights[x]

    def __eq__(self, other):
        if not isinstance(other, HeightFn):
            return NotImplemented
        return np.array_equal(self.heights, other.heights)

    def __hash__(self):
        return hash(self.heights.tobytes())

    def __repr__(self):
        return f"HeightFn({self.heights.tolist()})"


def to_height(cfg: ParticleConfig) -> HeightFn:
    h = np.zeros(cfg.N + 1, dtype=np.int64)
    np.cumsum(2 * cfg.occupancy.astype(np.int64) - 1, out=h[1:])
    return HeightFn(h)


def to_particles(h: HeightFn) -> ParticleConfig:
    return ParticleConfig((np.diff(h.heights) + 1) // 2)


def heights_from_occupancy(occ: np.ndarray) -> np.ndarray:
    """Vectorised height functions for an array of occupancies (last axis = sites)."""
    occ = np.asarray(occ, dtype=np.int64)
    out = np.zeros(occ.shape[:-1] + (occ.shape[-1] + 1,), dtype=np.int64)
    np.cumsum(2 * occ - 1, axis=-1, out=out[..., 1:])
    return out


def extremal_heights(N: int, k: int, which: str) -> np.ndarray:
    x = np.arange(N + 1)
    if which == "max":
        return np.minimum(x, 2 * k - x)
    if which == "min":
        return np.maximum(-x, x - 2 * N + 2 * k)
    raise ValidationError(f"which must be 'max' or 'min', got {which!r}")


def extremal(params: ModelParams, which: str) -> HeightFn:
    """Maximal (``"max"``) or minimal (``"min"``) height function."""
    return HeightFn(extremal_heights(params.N, params.k, which))


def xi_max(params: ModelParams) -> ParticleConfig:
    return ParticleConfig.from_positions(params.N, range(1, params.k + 1))


def xi_min(params: ModelParams) -> ParticleConfig:
    return ParticleConfig.from_positions(params.N, range(params.N - params.k + 1, params.N + 1))


@dataclass(frozen=True)
class ConfigStats:
    ell: int
    r: int
    L: int
    R: int
    Q1: int
    Q2: int
    Q: int
    A: int
    D: int


def _max_run(mask: np.ndarray) -> int:
    best = run = 0
    for v in mask:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def stats(cfg: ParticleConfig) -> ConfigStats:
    occ = cfg.occupancy
    N, k = cfg.N, cfg.k
    pos = cfg.positions
    ell = int(pos[0])
    r = int(np.flatnonzero(occ == 0)[-1] + 1)
    A = int(np.sum(N - k + np.arange(1, k + 1) - pos))
    q1 = _max_run(occ == 0)
    q2 = _max_run(occ == 1)
    L, R = ell - 1, r
    D = max(abs(L - N + k), abs(R - N + k))
    return ConfigStats(ell=ell, r=r, L=L, R=R, Q1=q1, Q2=q2, Q=max(q1, q2), A=A, D=D)


def batch_stats(occ: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorised :func:`stats` over an array of occupancies (shape ``(..., N)``)."""
    occ = np.asarray(occ, dtype=np.int64)
    N = occ.shape[-1]
    k = occ.sum(axis=-1)
    sites = np.arange(1, N + 1)
    ell = np.where(occ == 1, sites, N + 1).min(axis=-1)
    r = np.where(occ == 0, sites, 0).max(axis=-1)
    # A = sum_i (N-k+i) - sum_i xi_i = k(N-k) + k(k+1)/2 - sum of positions
    A = k * (N - k) + k * (k + 1) // 2 - (occ * sites).sum(axis=-1)
    q1 = _batch_max_run(occ == 0)
    q2 = _batch_max_run(occ == 1)
    L, R = ell - 1, r
    D = np.maximum(np.abs(L - N + k), np.abs(R - N + k))
    return {"ell": ell, "r": r, "L": L, "R": R, "Q1": q1, "Q2": q2, "Q": np.maximum(q1, q2), "A": A, "D": D}


def _batch_max_run(mask: np.ndarray) -> np.ndarray:
    run = np.zeros(mask.shape[:-1], dtype=np.int64)
    best = np.zeros_like(run)
    for x in range(mask.shape[-1]):
        run = np.where(mask[..., x], run + 1, 0)
        np.maximum(best, run, out=best)
    return best


class Order(enum.Enum):
    LE = "LE"
    GE = "GE"
    EQ = "EQ"
    INCOMPARABLE = "INCOMPARABLE"


def compare(h1: HeightFn, h2: HeightFn) -> Order:
    if h1.N != h2.N or h1.k != h2.k:
        raise ValidationError(f"cannot compare (N,k)=({h1.N},{h1.k}) with ({h2.N},{h2.k})")
    d = h1.heights - h2.heights
    le, ge = bool(np.all(d <= 0)), bool(np.all(d >= 0))
    if le and ge:
        return Order.EQ
    if le:
        return Order.LE
    if ge:
        return Order.GE
    return Order.INCOMPARABLE


def enumerate_states(N: int, k: int) -> np.ndarray:
    """All occupancies of Omega^0_{N,k}, colexicographic in particle positions.

    Returns an ``(C(N,k), N)`` int8 array.
    """
    combos = sorted(itertools.combinations(range(N), k), key=lambda c: c[::-1])
    out = np.zeros((len(combos), N), dtype=np.int8)
    for i, c in enumerate(combos):
        out[i, list(c)] = 1
    return out
