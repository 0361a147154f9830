"""Mean squared gradient-mapping norm of SGD3 on a three-point dual instance, over a budget ladder."""

import argparse
import warnings

import numpy as np

from dpreg.core_math import build_grid
from dpreg.dual import (FeaturePool, ProblemParams, full_gradient, gradient_mapping, pool_oracle,
                        sigma_hat_squared, smoothness_constant)
from dpreg.optimizers import grad_map_alpha_default, sgd3_refined


def tiny_problem(beta, eps):
    grid = build_grid(1.0, 1)
    p = np.array([0.5, 0.5])
    tau = np.array([[0.8, 0.2], [0.5, 0.5], [0.2, 0.8]])
    params = ProblemParams(beta, eps, p, grid)
    return params, FeaturePool.from_predictions([-0.6, 0.1, 0.8], tau, p, grid), tau


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--beta", type=float, default=2.0)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--log2-ratio", type=int, default=8, help="mu = M / 2^k")
    ap.add_argument("--budgets", default="1000,4000,16000,64000")
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()

    params, pool, tau = tiny_problem(args.beta, args.eps)
    M = smoothness_constant(args.beta, sigma_hat_squared(tau, params.p))
    mu = M / 2 ** args.log2_ratio
    alpha = grad_map_alpha_default(mu, M)
    print("T,inner,mean_sq_grad_map,std_err")
    for T in (int(t) for t in args.budgets.split(",")):
        for inner in ("acsa", "acsa2"):
            vals = []
            for seed in range(args.seeds):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    w = sgd3_refined(pool_oracle(params, pool, seed=seed), np.zeros(params.shape),
                                     mu, M, T, inner=inner)
                G = gradient_mapping(w, full_gradient(w, params, pool), alpha)
                vals.append(float(np.sum(G * G)))
            v = np.array(vals)
            print(f"{T},{inner},{v.mean():.6g},{v.std(ddof=1) / np.sqrt(v.size):.3g}")


if __name__ == "__main__":
    main()
