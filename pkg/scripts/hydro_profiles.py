"""Rescaled height from the maximum next to the macroscopic profile, plus boundary processes."""

import argparse

import numpy as np

from wasep.dynamics import run_ensemble
from wasep.estimators import boundary_scaling
from wasep.hydro import g
from wasep.io import write_csv
from wasep.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=512)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--b", type=float, default=0.1)
    ap.add_argument("--t", type=float, nargs="+", default=[0.25, 0.5, 1.0, 1.5, 2.0])
    ap.add_argument("--replicas", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--prefix", default="hydro")
    args = ap.parse_args()
    P = ModelParams.from_bias(args.N, round(args.alpha * args.N), args.b)
    t = np.asarray(args.t)
    rec = run_ensemble(P, ["max"], t * P.N / P.b, args.replicas, args.seed)
    x = np.arange(P.N + 1) / P.N
    mean = rec.heights[:, :, 0, :].mean(axis=0) / P.N
    rows = [[ti, xi, mi, g(P.k / P.N, ti, xi)] for ti, m in zip(t, mean) for xi, mi in zip(x, m)]
    write_csv(f"{args.prefix}_profiles.csv", ["t", "x", "height_over_N", "g"], rows)
    bd = boundary_scaling(P, t, args.replicas, args.seed + 1)
    write_csv(f"{args.prefix}_boundary.csv", ["t", "L_over_N", "L_ci", "ell", "R_over_N", "R_ci", "r"],
              zip(bd.t, bd.L_mean, bd.L_ci, bd.ell, bd.R_mean, bd.R_ci, bd.r))
    for row in zip(bd.t, bd.L_mean, bd.ell, bd.R_mean, bd.r):
        print("t=%.2f  L/N=%.3f (ell %.3f)  R/N=%.3f (r %.3f)" % row)


if __name__ == "__main__":
    main()
