"""Command-line experiment runner.

Every subcommand writes CSV/JSON outputs plus ``manifest.json`` (config echo,
version, wall-clock, sha256 per output) into the run directory. Exit codes:
0 success, 2 invalid input, 3 state space above the configured cap.

The default run directory is ``$WASEP_OUT/<command>`` (``WASEP_OUT``
defaults to ``wasep-out``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .equilibrium import StateSpaceTooLarge
from .model import ModelParams, ValidationError

log = logging.getLogger("wasep")

COMMANDS = ("exact", "sample-pi", "simulate", "couple", "mix-bounds", "hydro", "boundary", "aux",
            "mgale-check", "crossover-sweep")
EXIT_OK, EXIT_INVALID, EXIT_CAP = 0, 2, 3
EXACT_OVERLAY_CAP = 500  # mix-bounds adds the exact TV curve below this many states


@dataclass
class ExperimentConfig:
    """Everything a run depends on; serialisable and round-trippable."""

    command: str
    N: int | None = None
    k: int | None = None
    p: float | None = None
    t: list[float] | None = None
    eps: list[float] = field(default_factory=lambda: [0.25])
    u: list[float] = field(default_factory=lambda: [25.0, 100.0])
    lam: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])
    replicas: int = 1000
    lower_replicas: int | None = None
    samples: int = 10_000
    seed: int = 0
    out: str | None = None
    cap: int = 200_000
    threads: int | None = None
    chains: list[str] = field(default_factory=lambda: ["max", "min"])
    t_max: float | None = None
    grid_points: int = 40
    n: int = 5
    beta: float = 0.5
    betas: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    a: float = 10.0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.replicas < 1 or self.samples < 1:
            raise ValidationError("replicas and samples must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ValidationError("threads must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValidationError(f"unknown config fields: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def params(self) -> ModelParams:
        if self.N is None or self.k is None or self.p is None:
            raise ValidationError(f"{self.command} needs --N, --k and --p")
        return ModelParams(self.N, self.k, self.p)

    def outdir(self) -> Path:
        if self.out:
            return Path(self.out)
        return Path(os.environ.get("WASEP_OUT", "wasep-out")) / self.command


# --- subcommands -----------------------------------------------------------
# Each returns the list of files it wrote.


def _grid(cfg: ExperimentConfig, params: ModelParams) -> np.ndarray:
    from .estimators import default_grid

    return np.asarray(cfg.t, dtype=float) if cfg.t else default_grid(params, cfg.grid_points)


def run_exact(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .exact import DENSE_CAP, build_generator, exact_gap, mixing_time, transient_many, tv_curve
    from .io import write_csv, write_json

    P = cfg.params()
    gen = build_generator(P, cap=cfg.cap)
    if gen.n_states > DENSE_CAP:
        raise StateSpaceTooLarge(gen.n_states, DENSE_CAP)
    t = _grid(cfg, P)
    curve = tv_curve(gen, t, "all")
    ext = tv_curve(gen, t, "extremals")
    res = transient_many(gen, np.eye(gen.n_states)[list(gen.extremal_indices())], t)  # truncation diagnostics
    summary = {
        "params": {"N": P.N, "k": P.k, "p": P.p},
        "gap_exact": exact_gap(gen),
        "gap_formula": P.gap,
        "mix_times": {f"{e:g}": mixing_time(gen, e) for e in cfg.eps},
        "n_states": gen.n_states,
        "n_edges": gen.n_edges,
        "extremal_start_shortfall": float(np.max(curve.d - ext.d)),
        "discarded_mass": res.discarded_mass,
        "renorm_delta": res.renorm_delta,
    }
    states = [''.join(map(str, s)) for s in gen.states]
    rows = [[ti, di, de, states[a]] for ti, di, de, a in zip(t, curve.d, ext.d, curve.argmax)]
    return [write_json(out / "exact.json", summary),
            write_csv(out / "d_exact.csv", ["t", "d_exact", "d_extremal", "argmax_state"], rows)]


def run_sample_pi(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .equilibrium import density_profile, gap_statistics, sample_pi_many
    from .io import write_csv, write_json, write_lines
    from .rng import generator

    P = cfg.params()
    occ, approx = sample_pi_many(P, cfg.samples, generator(cfg.seed, 0, "sample-pi"))
    prof = density_profile(P, occ)
    gs = gap_statistics(occ)
    summary = {
        "samples": cfg.samples,
        "approximate": approx,
        "density_violations": prof.violations,
        "Q": {"mean": gs.mean(), "quantiles": {f"{q:g}": v for q, v in gs.quantiles().items()}},
        "Q1_mean": float(gs.Q1.mean()),
        "Q2_mean": float(gs.Q2.mean()),
    }
    files = [write_lines(out / "samples.txt", (''.join(map(str, row)) for row in occ)),
             write_csv(out / "profile.csv", ["site", "value", "lower_bound", "upper_bound"],
                       [[x + 1, v, lo, hi] for x, (v, lo, hi) in enumerate(zip(prof.values, prof.lower, prof.upper))]),
             write_json(out / "sample_pi.json", summary)]
    return files


def run_simulate(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .dynamics import run_ensemble
    from .io import write_csv, write_json

    P = cfg.params()
    t = _grid(cfg, P)
    rec = run_ensemble(P, cfg.chains, t, cfg.replicas, cfg.seed)
    return [write_csv(out / "trajectory.csv", rec.columns(), rec.rows()),
            write_json(out / "summary.json", rec.summary())]


def _t_max(cfg: ExperimentConfig, P: ModelParams) -> float:
    if cfg.t_max is not None:
        return float(cfg.t_max)
    return 100.0 * max(math.log(P.k), 1.0) / P.gap


def run_couple(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .dynamics import merging_times
    from .io import write_csv, write_json

    P = cfg.params()
    t_max = _t_max(cfg, P)
    taus = merging_times(P, cfg.replicas, cfg.seed, t_max)
    fin = taus[np.isfinite(taus)]
    summary = {
        "replicas": cfg.replicas,
        "seed": cfg.seed,
        "t_max": t_max,
        "timeouts": int(np.sum(~np.isfinite(taus))),
        "mean": float(fin.mean()) if fin.size else "TIMEOUT",
        "var": float(fin.var(ddof=1)) if fin.size > 1 else 0.0,
        "quantiles": {f"{q:g}": float(np.quantile(taus, q)) for q in (0.1, 0.5, 0.9)},
        "scaled_mean_bN": float(fin.mean() * P.b / P.N) if fin.size and P.b > 0 else None,
    }
    return [write_csv(out / "merge_times.csv", ["replica", "tau"], [[r, tau] for r, tau in enumerate(taus)]),
            write_json(out / "couple.json", summary)]


def run_mix_bounds(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .estimators import mix_bounds
    from .exact import build_generator, tv_curve
    from .io import write_csv, write_json

    P = cfg.params()
    t = _grid(cfg, P)
    lower_reps = cfg.lower_replicas or max(cfg.replicas, 1000)
    curve, brackets = mix_bounds(P, t, cfg.eps, cfg.replicas, cfg.seed, lower_reps, cfg.samples)
    if P.n_states <= EXACT_OVERLAY_CAP:
        curve.d_exact = tv_curve(build_generator(P), t, "all").d
    summary = {
        "params": {"N": P.N, "k": P.k, "p": P.p},
        "gap": P.gap,
        "replicas_upper": curve.replicas_upper,
        "replicas_lower": curve.replicas_lower,
        "seed": cfg.seed,
        "horizon": float(t[-1]),
        "brackets": [b.to_dict() for b in brackets],
    }
    return [write_csv(out / "curves.csv", curve.columns(), curve.rows()),
            write_json(out / "mix_bounds.json", summary)]


def run_hydro(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .estimators import hydro_distance
    from .hydro import MacroProfile
    from .io import write_csv, write_json

    P = cfg.params()
    t = np.asarray(cfg.t or [0.5, 1.0, 2.0], dtype=float)
    res = hydro_distance(P, t, cfg.replicas, cfg.seed)
    prof = MacroProfile(P.k / P.N)
    return [write_csv(out / "hydro.csv", ["t", "median", "q90"], zip(t, res.median, res.q90)),
            write_csv(out / "profile_grid.csv", ["t", "x", "g"], prof.grid(t)),
            write_json(out / "hydro.json", {"alpha": prof.alpha, "replicas": cfg.replicas, "seed": cfg.seed,
                                            "distances": res.distances})]


def run_boundary(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .estimators import boundary_scaling
    from .io import write_csv

    P = cfg.params()
    t = np.asarray(cfg.t or [0.5, 1.0, 2.0], dtype=float)
    r = boundary_scaling(P, t, cfg.replicas, cfg.seed)
    rows = zip(r.t, r.L_mean, r.L_ci, r.R_mean, r.R_ci, r.ell, r.r)
    return [write_csv(out / "boundary.csv", ["t", "L_over_N", "L_ci", "R_over_N", "R_ci", "ell_alpha", "r_alpha"], rows)]


def run_aux(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .auxline import deviation_stats, mu_values, run_stationary, spacing_report
    from .io import write_csv, write_json

    if cfg.p is None:
        raise ValidationError("aux needs --p")
    t = np.asarray(cfg.t or [10.0, 50.0], dtype=float)
    rep = spacing_report(cfg.n, cfg.beta, cfg.p, t, cfg.replicas, cfg.seed)
    mu = mu_values(cfg.n, cfg.beta, cfg.p)
    rows = [[ti, i + 1, mu[i], rep.tv[j, i], rep.chi2_pvalues[j, i]] for j, ti in enumerate(t) for i in range(cfg.n)]
    files = [write_csv(out / "spacings.csv", ["t", "spacing_index", "mu", "tv", "chi2_pvalue"], rows)]
    pos = run_stationary(cfg.n, cfg.beta, cfg.p, t, 1, cfg.seed)[0]
    files.append(write_csv(out / "positions.csv", ["t", "particle_index", "position"],
                           [[ti, i + 1, pos[j, i]] for j, ti in enumerate(t) for i in range(cfg.n + 1)]))
    summary = {"n": cfg.n, "beta": cfg.beta, "p": cfg.p, "replicas": cfg.replicas, "seed": cfg.seed,
               "span_mean": rep.span_mean, "span_se": rep.span_se, "span_expected": rep.span_expected,
               "max_tv": float(rep.tv.max()), "min_chi2_pvalue": float(rep.chi2_pvalues.min())}
    if t[-1] >= 1:
        dev = deviation_stats(cfg.n, cfg.beta, cfg.p, float(t[-1]), cfg.replicas, cfg.seed)
        files.append(write_csv(out / "deviation.csv", ["A", "fraction_below"], zip(dev.A_grid, dev.fraction_below)))
        summary["deviation"] = {"t": dev.t, "scale": dev.scale, "quantiles": dev.quantiles,
                                "displacement_rates": dev.displacement_rates, "drift": cfg.beta * (2 * cfg.p - 1)}
    files.append(write_json(out / "aux.json", summary))
    return files


def run_mgale_check(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .io import write_csv, write_json
    from .martingale import (check_absorption_bound, check_bracket_bound, check_expo_moment, check_submartingale,
                             compensated_poisson, expo_taylor_check, walk_batch, wasep_area_batch)

    u = np.asarray(cfg.u, dtype=float)
    t_max = cfg.a**2 * float(u.max()) * 1.0001
    walk = walk_batch(cfg.a, cfg.replicas, cfg.seed, t_max)
    absorb = check_absorption_bound(walk, cfg.a, u)
    brk = check_bracket_bound(walk, cfg.a, 0.0, u)
    x = compensated_poisson(1.0, cfg.replicas, cfg.seed)
    expo = check_expo_moment(x, cfg.lam, 1.0, 1.0, 1.0, seed=cfg.seed)
    taylor_ok, taylor_slack = expo_taylor_check()
    sub = check_submartingale([0.2, 0.5], 1.0, 1.0, cfg.replicas, cfg.seed)
    files = [write_csv(out / "absorption.csv", absorb.columns(), absorb.rows()),
             write_csv(out / "bracket.csv", brk.columns(), brk.rows()),
             write_csv(out / "expo_moment.csv", expo.columns(), expo.rows())]
    report = {
        "replicas": cfg.replicas, "seed": cfg.seed, "a": cfg.a,
        "absorption": absorb.to_dict(), "bracket": brk.to_dict(),
        "expo_moment_passed": bool(expo.passed.all()),
        "expo_taylor": {"passed": taylor_ok, "min_slack": taylor_slack},
        "submartingale": [dataclasses.asdict(r) for r in sub],
    }
    if cfg.N is not None:
        P = cfg.params()
        area = check_absorption_bound(wasep_area_batch(P, cfg.replicas, cfg.seed), None, u)
        files.append(write_csv(out / "wasep_area.csv", area.columns(), area.rows()))
        report["wasep_area"] = area.to_dict()
    files.append(write_json(out / "report.json", report))
    return files


def run_crossover_sweep(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .equilibrium import log_density_profile, sample_pi_many
    from .estimators import default_grid, mix_bounds
    from .io import write_csv, write_json
    from .rng import generator

    if cfg.N is None or cfg.k is None:
        raise ValidationError("crossover-sweep needs --N and --k")
    if cfg.k < 2:
        raise ValidationError("crossover-sweep needs k >= 2")
    rows, prof_rows = [], []
    for beta in cfg.betas:
        b = beta * math.log(cfg.k) / cfg.N
        P = ModelParams.from_bias(cfg.N, cfg.k, b)
        t = np.asarray(cfg.t, dtype=float) if cfg.t else default_grid(P, cfg.grid_points)
        _, brackets = mix_bounds(P, t, cfg.eps, cfg.replicas, cfg.seed, cfg.lower_replicas or max(cfg.replicas, 1000),
                                 cfg.samples)
        for br in brackets:
            d = br.to_dict()
            rows.append([beta, b, P.p, br.eps, d["t_lower"], d["t_upper"], P.gap,
                         br.t_upper * P.gap / math.log(cfg.k) if not br.upper_timeout else float("nan")])
        occ, _ = sample_pi_many(P, cfg.samples, generator(cfg.seed, 0, "crossover-pi"))
        z, prof = log_density_profile(occ)
        prof_rows += [[beta, zi, pi] for zi, pi in zip(z, prof)]
    return [write_csv(out / "sweep.csv", ["beta", "b", "p", "eps", "t_lower", "t_upper", "gap", "t_upper_gap_over_logk"], rows),
            write_csv(out / "log_density.csv", ["beta", "z", "profile"], prof_rows),
            write_json(out / "sweep.json", {"N": cfg.N, "k": cfg.k, "betas": cfg.betas, "seed": cfg.seed})]


RUNNERS = {
    "exact": run_exact,
    "sample-pi": run_sample_pi,
    "simulate": run_simulate,
    "couple": run_couple,
    "mix-bounds": run_mix_bounds,
    "hydro": run_hydro,
    "boundary": run_boundary,
    "aux": run_aux,
    "mgale-check": run_mgale_check,
    "crossover-sweep": run_crossover_sweep,
}


def set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    if n > limit:
        log.warning("requested %d threads but numba allows %d; using %d", n, limit, limit)
        n = limit
    numba.set_num_threads(n)


def run(cfg: ExperimentConfig) -> int:
    """Execute a config; returns the exit code."""
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    out = cfg.outdir()
    try:
        set_threads(cfg.threads)
        out.mkdir(parents=True, exist_ok=True)
        files = RUNNERS[cfg.command](cfg, out)
    except StateSpaceTooLarge as exc:
        log.error("%s", exc)
        return EXIT_CAP
    except ValidationError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    from .io import RunManifest

    RunManifest.collect(out, files, cfg.to_dict(), __version__, time.perf_counter() - t0, started).write(out)
    log.info("wrote %d files to %s", len(files) + 1, out)
    return EXIT_OK


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wasep", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=S, help="JSON config; flags override its fields")
        sp.add_argument("--N", type=int, default=S)
        sp.add_argument("--k", type=int, default=S)
        sp.add_argument("--p", type=float, default=S)
        sp.add_argument("--t", type=_floats, default=S, help="comma-separated times")
        sp.add_argument("--eps", type=_floats, default=S)
        sp.add_argument("--u", type=_floats, default=S)
        sp.add_argument("--lam", type=_floats, default=S)
        sp.add_argument("--replicas", type=int, default=S)
        sp.add_argument("--lower-replicas", dest="lower_replicas", type=int, default=S)
        sp.add_argument("--samples", type=int, default=S)
        sp.add_argument("--seed", type=int, default=S)
        sp.add_argument("--out", type=str, default=S)
        sp.add_argument("--cap", type=int, default=S)
        sp.add_argument("--threads", type=int, default=S)
        sp.add_argument("--chains", type=lambda s: s.split(","), default=S)
        sp.add_argument("--t-max", dest="t_max", type=float, default=S)
        sp.add_argument("--grid-points", dest="grid_points", type=int, default=S)
        sp.add_argument("--n", type=int, default=S)
        sp.add_argument("--beta", type=float, default=S)
        sp.add_argument("--betas", type=_floats, default=S)
        sp.add_argument("--a", type=float, default=S)
    return parser


def parse_config(argv) -> tuple[ExperimentConfig, bool]:
    args = vars(build_parser().parse_args(argv))
    verbose = args.pop("verbose")
    cfg_path = args.pop("config", None)
    base = json.loads(cfg_path.read_text()) if cfg_path else {}
    base.update(args)
    return ExperimentConfig.from_dict(base), verbose


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg, verbose = parse_config(argv)
    except ValidationError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_INVALID
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
