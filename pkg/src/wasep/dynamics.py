"""Corner-flip dynamics under the monotone Poisson-clock grand coupling.

Any finite set of height functions can be tracked together. Each clock
``(site i, height l)`` with rate ``p`` (local max, flips down) or ``q`` (local
min, flips up) acts on every tracked chain that has that exact corner, so
ordered chains stay ordered and coalesced chains stay together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .equilibrium import EquilibriumSampler
from .model import HeightFn, ModelParams, ValidationError, batch_stats, extremal_heights
from .rng import generator, kernel_state, stream_key, stream_keys
from .spectral import SpectralData, eval_f, h_statistic, spectral_data, weighted_area

CHAIN_LABELS = ("max", "min", "pi")


class CouplingEngine:
    """Event-driven state of several coupled height functions.

    ``chains`` maps labels to initial height functions (or to ``"max"``,
    ``"min"``, ``"pi"``). The ``"pi"`` chain is drawn from the stationary law
    with the engine's own stream, independently of the clocks.
    """

    def __init__(self, params: ModelParams, chains, seed: int = 0, replica: int = 0):
        self.params = params
        if isinstance(chains, (list, tuple)):
            chains = {c: c for c in chains}
        self.labels = list(chains)
        rng = generator(seed, replica, "engine-init")
        rows = [initial_heights(params, spec, rng) for spec in chains.values()]
        self._h = np.stack(rows).astype(np.int64)
        self._state = kernel_state(stream_key(seed, replica, "engine"))
        self._ws = _engine.new_workspace(len(rows), params.N)
        self.clock = 0.0
        self.events = 0

    @property
    def chains(self) -> list[HeightFn]:
        return [HeightFn(row) for row in self._h]

    def heights(self) -> np.ndarray:
        return self._h.copy()

    def chain(self, label: str) -> HeightFn:
        return HeightFn(self._h[self.labels.index(label)])

    def coalesced(self) -> bool:
        return bool(np.all(self._h == self._h[0]))

    def advance(self, t_target: float) -> "CouplingEngine":
        if t_target < self.clock:
            raise ValidationError(f"t_target {t_target} is before current time {self.clock}")
        t, ev, _ = _engine.evolve(self._h, self.params.p, self._state, self.clock, t_target, False, 0, self._ws)
        self.clock = t
        self.events += ev
        return self

    def step(self, n_events: int) -> "CouplingEngine":
        """Advance by exactly ``n_events`` flips."""
        t, ev, _ = _engine.evolve(self._h, self.params.p, self._state, self.clock, math.inf, False, n_events, self._ws)
        self.clock = t
        self.events += ev
        return self

    def merging_time(self, t_max: float) -> float:
        """First time all chains coincide (``inf`` on timeout past ``t_max``)."""
        t, ev, merged = _engine.evolve(self._h, self.params.p, self._state, self.clock, t_max, True, 0, self._ws)
        self.clock = t
        self.events += ev
        return t if merged else math.inf


def initial_heights(params: ModelParams, spec, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, HeightFn):
        if spec.N != params.N or spec.k != params.k:
            raise ValidationError("initial height function does not match (N, k)")
        return spec.heights
    if spec in ("max", "min"):
        return extremal_heights(params.N, params.k, spec)
    if spec == "pi":
        occ = EquilibriumSampler(params).sample(1, rng)[0]
        return np.concatenate([[0], np.cumsum(2 * occ.astype(np.int64) - 1)])
    raise ValidationError(f"unknown chain spec {spec!r}")


def merging_time(params: ModelParams, t_max: float, seed: int = 0, replica: int = 0) -> float:
    """Merging time of the coupled extremal chains, ``inf`` on timeout."""
    return CouplingEngine(params, ("max", "min"), seed, replica).merging_time(t_max)


def ensemble_init(params: ModelParams, chain_spec, replicas: int, seed: int) -> np.ndarray:
    """``(replicas, C, N+1)`` initial heights; ``"pi"`` chains drawn per replica stream."""
    chain_spec = list(chain_spec)
    out = np.empty((replicas, len(chain_spec), params.N + 1), dtype=np.int64)
    for c, spec in enumerate(chain_spec):
        if spec == "pi":
            sampler = EquilibriumSampler(params)
            occ = np.concatenate([sampler.sample(1, generator(seed, r, "pi-init")) for r in range(replicas)])
            out[:, c, 0] = 0
            np.cumsum(2 * occ.astype(np.int64) - 1, axis=1, out=out[:, c, 1:])
        else:
            out[:, c] = initial_heights(params, spec, None)
    return out


def merging_times(params: ModelParams, replicas: int, seed: int, t_max: float, chain_spec=("max", "min")) -> np.ndarray:
    init = ensemble_init(params, chain_spec, replicas, seed)
    return _engine.merge_ensemble(init, params.p, stream_keys(seed, replicas, "merge"), float(t_max))


@dataclass
class TrajectoryRecord:
    """Snapshots of an ensemble of coupled chains.

    ``heights`` has shape ``(replicas, T, C, N+1)``.
    """

    params: ModelParams
    labels: list[str]
    times: np.ndarray
    heights: np.ndarray
    events: np.ndarray
    seed: int
    _obs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("sample times must be strictly increasing")

    @property
    def replicas(self) -> int:
        return self.heights.shape[0]

    def occupancies(self) -> np.ndarray:
        return ((np.diff(self.heights, axis=-1) + 1) // 2).astype(np.int8)

    def observables(self, sd: SpectralData | None = None) -> dict[str, np.ndarray]:
        """Per-chain statistics (shape ``(replicas, T, C)``) and pairwise ones against chain 0."""
        if self._obs:
            return self._obs
        sd = sd or spectral_data(self.params)
        H = self.heights.astype(np.int64)
        obs = {k: v for k, v in batch_stats(self.occupancies()).items()}
        obs["f1"] = eval_f(1, H, sd)
        obs["f0"] = eval_f(0, H, sd)
        top = H[:, :, :1, :]
        ordered = np.all(top >= H, axis=-1)
        obs["coalesced"] = np.all(top == H, axis=-1)
        area = np.full(H.shape[:3], np.nan)
        hstat = np.full(H.shape[:3], np.nan)
        if ordered.all():
            area = weighted_area(np.broadcast_to(top, H.shape), H, sd)
            hstat = h_statistic(np.broadcast_to(top, H.shape), H, sd)
        obs["area_vs_0"] = area
        obs["H_vs_0"] = hstat
        self._obs = obs
        return obs

    def summary(self) -> dict:
        """Ensemble means, variances and Wilson-score intervals of binary observables."""
        obs = self.observables()
        out = {"replicas": self.replicas, "seed": self.seed, "times": self.times.tolist(), "chains": {}}
        for c, lab in enumerate(self.labels):
            d = {}
            for name, arr in obs.items():
                a = np.asarray(arr[:, :, c], dtype=float)
                entry = {"mean": a.mean(axis=0).tolist(), "var": a.var(axis=0, ddof=1).tolist() if self.replicas > 1 else [0.0] * a.shape[1]}
                if arr.dtype == bool:
                    lo, hi = wilson_interval(a.sum(axis=0), self.replicas)
                    entry["ci_low"], entry["ci_high"] = lo.tolist(), hi.tolist()
                else:
                    half = 1.96 * np.sqrt(np.asarray(entry["var"]) / self.replicas)
                    entry["ci_low"] = (a.mean(axis=0) - half).tolist()
                    entry["ci_high"] = (a.mean(axis=0) + half).tolist()
                d[name] = entry
            out["chains"][lab] = d
        return out

    def rows(self):
        """Long-format rows ``(replica, time, chain_label, observables...)``."""
        obs = self.observables()
        names = list(obs)
        for r in range(self.replicas):
            for j, t in enumerate(self.times):
                for c, lab in enumerate(self.labels):
                    yield [r, float(t), lab] + [obs[n][r, j, c] for n in names]

    def columns(self) -> list[str]:
        return ["replica", "time", "chain_label"] + list(self.observables())


def run_ensemble(params: ModelParams, chain_spec, schedule, replicas: int, seed: int) -> TrajectoryRecord:
    """Evolve ``replicas`` independent copies of the coupled chains and snapshot them at ``schedule``.

    Replica ``r`` uses streams derived from ``(seed, r)`` only, so output does
    not depend on the number of threads.
    """
    if replicas < 1:
        raise ValidationError("replicas must be >= 1")
    times = np.asarray(schedule, dtype=float)
    chain_spec = list(chain_spec)
    init = ensemble_init(params, chain_spec, replicas, seed)
    heights, events = _engine.record_ensemble(init, params.p, stream_keys(seed, replicas, "ensemble"), times)
    return TrajectoryRecord(params, [str(s) for s in chain_spec], times, heights, events, seed)


def ensemble_chunks(params: ModelParams, chain_spec, schedule, replicas: int, seed: int, chunk: int):
    """Like :func:`run_ensemble` but yields ``(times, heights)`` every ``chunk`` sample times.

    The caller may stop iterating early. Chunk ``c`` uses its own stream
    derived from ``(seed, replica, c)``.
    """
    times = np.asarray(schedule, dtype=float)
    h = ensemble_init(params, list(chain_spec), replicas, seed)
    t0 = 0.0
    for c, start in enumerate(range(0, times.size, chunk)):
        tc = times[start:start + chunk]
        heights, _ = _engine.record_ensemble(h, params.p, stream_keys(seed, replicas, f"ensemble-chunk-{c}"), tc - t0)
        yield tc, heights
        h = heights[:, -1].astype(np.int64)
        t0 = float(tc[-1])


def wilson_interval(successes, n: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion."""
    s = np.asarray(successes, dtype=float)
    phat = s / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return np.clip(centre - half, 0.0, 1.0), np.clip(centre + half, 0.0, 1.0)
