"""Symmetric case: T_upper(eps) pi^2 / (N^2 log k) for k = N/2 and growing N."""

import argparse
import math

from wasep.dynamics import merging_times
from wasep.estimators import upper_crossing
from wasep.io import write_csv
from wasep.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[16, 32, 64, 128])
    ap.add_argument("--eps", type=float, default=0.25)
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="symmetric_trend.csv")
    args = ap.parse_args()
    rows = []
    for N in args.N:
        k = N // 2
        P = ModelParams(N, k, 0.5)
        scale = N**2 * math.log(k) / math.pi**2
        horizon = 6 * scale
        t_up = upper_crossing(merging_times(P, args.replicas, args.seed, horizon), args.eps, horizon)
        rows.append([N, k, t_up, t_up / scale])
        print(f"N={N:5d}  T_upper pi^2/(N^2 log k) = {t_up / scale:.4f}", flush=True)
    write_csv(args.out, ["N", "k", "t_upper", "ratio"], rows)


if __name__ == "__main__":
    main()
