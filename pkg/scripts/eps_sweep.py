"""Risk and KS unfairness of the fair policy across slack levels, averaged over repetitions."""

import argparse
import warnings

import numpy as np

from dpreg.data import generate_synthetic, load_csv
from dpreg.experiment import run_experiment
from dpreg.pipeline import PostprocessConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=None, help="CSV with columns s and y (default: synthetic)")
    ap.add_argument("--n", type=int, default=2000, help="synthetic sample size")
    ap.add_argument("--T", type=int, default=10_000)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", default=",".join(str(2.0 ** -i) for i in range(1, 9)))
    args = ap.parse_args()

    data = load_csv(args.data) if args.data else generate_synthetic(args.n, seed=args.seed)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.reps)
    print("eps,risk_mean,risk_std,ks_mean,ks_std,base_risk_mean,base_ks_mean")
    for eps in (float(e) for e in args.eps.split(",")):
        rows = []
        for seed in seeds:
            config = PostprocessConfig(T=args.T, eps=eps, seed=int(seed))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = run_experiment(data, config, split_seed=int(seed))
            rows.append((res.fair_risk, res.fair_ks.max(), res.base_risk, res.base_ks.max()))
        a = np.array(rows)
        sd = a.std(axis=0, ddof=1) if len(a) > 1 else np.zeros(4)
        print(f"{eps:.6g},{a[:, 0].mean():.4f},{sd[0]:.4f},{a[:, 1].mean():.4f},{sd[1]:.4f},"
              f"{a[:, 2].mean():.4f},{a[:, 3].mean():.4f}")


if __name__ == "__main__":
    main()
