"""Rescaled coupling upper bound T_upper(eps) b / N for growing N at fixed bias.

The large-bias prediction for the constant is (sqrt(alpha) + sqrt(1 - alpha))^2.
"""

import argparse
import math

from wasep.dynamics import merging_times
from wasep.estimators import upper_crossing
from wasep.io import write_csv
from wasep.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--b", type=float, default=0.2)
    ap.add_argument("--eps", type=float, default=0.25)
    ap.add_argument("--replicas", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="large_bias_trend.csv")
    args = ap.parse_args()
    target = (math.sqrt(args.alpha) + math.sqrt(1 - args.alpha)) ** 2
    rows = []
    for N in args.N:
        P = ModelParams.from_bias(N, round(args.alpha * N), args.b)
        horizon = 5 * target * N / args.b
        t_up = upper_crossing(merging_times(P, args.replicas, args.seed, horizon), args.eps, horizon)
        rows.append([N, P.k, args.b, t_up, t_up * args.b / N, target])
        print(f"N={N:5d}  T_upper b/N = {t_up * args.b / N:.4f}  (prediction {target:.4f})", flush=True)
    write_csv(args.out, ["N", "k", "b", "t_upper", "t_upper_b_over_N", "prediction"], rows)


if __name__ == "__main__":
    main()
