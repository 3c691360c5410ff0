import numpy as np


def random_doubly_stochastic(n, rng, terms=None):
    """Convex combination of random permutation matrices (independent of Sinkhorn)."""
    terms = terms or n + 2
    w = rng.dirichlet(np.ones(terms))
    x = np.zeros((n, n))
    for wi in w:
        x[np.arange(n), rng.permutation(n)] += wi
    return x


def random_scenario_costs(n, rng, p_inf=0.3, high=None):
    high = float(n) if high is None else high
    c = rng.uniform(0.0, high, n)
    c[rng.random(n) < p_inf] = np.inf
    if not np.isfinite(c).any():
        c[rng.integers(n)] = rng.uniform(0.0, high)
    return tuple(c)
