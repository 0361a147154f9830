"""Small random problem instances shared by the test modules."""

import numpy as np

from dpreg.core_math import build_grid
from dpreg.dual import FeaturePool, ProblemParams


def random_instance(rng, L=2, K=2, n=5, beta=None, eps=None, B=1.0, exact=False):
    """``(params, pool, tau)`` with random marginals, posteriors and regression values.

    With ``exact=True`` the posteriors average to the marginals over the
    pool, as they would for the true conditional distribution.
    """
    grid = build_grid(B, L)
    if exact:
        tau = rng.dirichlet(np.ones(K), size=n)
        p = tau.mean(axis=0)
    else:
        p = rng.dirichlet(np.ones(K) * 2.0)
        p = np.maximum(p, 0.05)
        p /= p.sum()
        tau = rng.dirichlet(np.ones(K), size=n)
    beta = float(rng.uniform(0.5, 5.0)) if beta is None else beta
    eps = rng.uniform(0.0, 0.2, size=K) if eps is None else eps
    params = ProblemParams(beta, eps, p, grid)
    eta = rng.uniform(-B, B, size=n)
    pool = FeaturePool.from_predictions(eta, tau, p, grid)
    return params, pool, tau


def random_dual(rng, params, scale=1.0, sparsity=0.0):
    w = rng.exponential(scale, size=params.shape)
    if sparsity:
        w[rng.random(params.shape) < sparsity] = 0.0
    return w


def tiny_instance(beta=2.0, eps=0.05):
    """Three-point pool, three atoms, two groups, with active fairness constraints."""
    grid = build_grid(1.0, 1)
    p = np.array([0.5, 0.5])
    eta = np.array([-0.6, 0.1, 0.8])
    tau = np.array([[0.8, 0.2], [0.5, 0.5], [0.2, 0.8]])
    params = ProblemParams(beta, eps, p, grid)
    return params, FeaturePool.from_predictions(eta, tau, p, grid), tau


def solve_lp(params, pool):
    """Risk-minimal randomized policy under the pool fairness constraints, by linear programming.

    Variables are ``pi(l | x_i)``; the constraints are
    ``|mean_i pi(l | x_i) t_s(x_i)| <= eps_s`` and one simplex per row.
    Returns ``(risk, probs)``.
    """
    from scipy.optimize import linprog

    n, m, K = pool.size, params.grid.size, params.K
    c = pool.r.ravel() / n
    rows, rhs = [], []
    for l in range(m):
        for s in range(K):
            a = np.zeros((n, m))
            a[:, l] = pool.t[:, s] / n
            rows += [a.ravel(), -a.ravel()]
            rhs += [params.eps[s], params.eps[s]]
    A_eq = np.kron(np.eye(n), np.ones(m))
    res = linprog(c, A_ub=np.array(rows), b_ub=rhs, A_eq=A_eq, b_eq=np.ones(n),
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun), res.x.reshape(n, m)


def solve_dual(params, pool):
    """Accurate minimizer of the dual objective over the orthant (L-BFGS-B)."""
    from scipy.optimize import minimize

    from dpreg.dual import full_gradient, objective_value

    size = int(np.prod(params.shape))
    res = minimize(lambda v: objective_value(v.reshape(params.shape), params, pool),
                   np.zeros(size), method="L-BFGS-B",
                   jac=lambda v: full_gradient(v.reshape(params.shape), params, pool).ravel(),
                   bounds=[(0, None)] * size,
                   options=dict(ftol=1e-15, gtol=1e-11, maxiter=20000))
    return res.x.reshape(params.shape)
