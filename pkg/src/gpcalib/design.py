"""Space-filling experimental designs on the unit hypercube."""

from __future__ import annotations

import numpy as np


def _min_pairwise_sqdist(X: np.ndarray) -> float:
    d = X[:, None, :] - X[None, :, :]
    sq = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(sq, np.inf)
    return float(sq.min())


def random_lhd(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube with one point uniformly placed in each stratum."""
    out = np.empty((n, p))
    for j in range(p):
        perm = rng.permutation(n)
        out[:, j] = (perm + rng.uniform(size=n)) / n
    return out


def maximin_lhd(n: int, p: int, iterations: int = 200, seed: int = 0) -> np.ndarray:
    """Latin hypercube improved by pairwise-swap hill climbing.

    Starting from a seeded random Latin hypercube, repeatedly swaps two
    entries within a random column and keeps the swap whenever it strictly
    increases the minimum pairwise distance.  ``iterations = 0`` returns the
    raw hypercube.  Deterministic given the seed.
    """
    if n < 2 or p < 1:
        raise ValueError("need n >= 2 and p >= 1")
    rng = np.random.default_rng(seed)
    X = random_lhd(n, p, rng)
    best = _min_pairwise_sqdist(X)
    for _ in range(iterations):
        j = int(rng.integers(p))
        i1, i2 = rng.choice(n, size=2, replace=False)
        X[i1, j], X[i2, j] = X[i2, j], X[i1, j]
        cand = _min_pairwise_sqdist(X)
        if cand > best:
            best = cand
        else:
            X[i1, j], X[i2, j] = X[i2, j], X[i1, j]
    return X


def scale_to_domain(U: np.ndarray, domain) -> np.ndarray:
    """Map unit-cube points onto a rectangle given as rows of (lower, upper)."""
    domain = np.atleast_2d(np.asarray(domain, dtype=float))
    return domain[:, 0] + U * (domain[:, 1] - domain[:, 0])
