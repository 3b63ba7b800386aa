"""Empirical regret and its analytical bounds."""
from __future__ import annotations

import numpy as np


def empirical_regret(arms, oracle_means) -> np.ndarray:
    """Cumulative regret; oracle_means is (arms,) for stationary runs or (epochs, arms)."""
    arms = np.asarray(arms, dtype=np.int64)
    means = np.asarray(oracle_means, dtype=float)
    if means.ndim == 1:
        means = np.broadcast_to(means, (len(arms), len(means)))
    gap = means.max(axis=1) - means[np.arange(len(arms)), arms]
    return np.cumsum(gap)


def regret_upper_bound(gaps, horizon: float) -> float:
    gaps = np.asarray(gaps, dtype=float)
    if (gaps <= 0).any():
        raise ValueError("gaps must be strictly positive")
    return float(np.sum(4 * np.log(horizon) / gaps + 8 * gaps))


def kl_bernoulli(p: float, q: float) -> float:
    if p == q:
        return 0.0
    if q in (0.0, 1.0) or not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValueError(f"KL undefined for Bernoulli({p}) vs Bernoulli({q})")
    out = 0.0
    if p > 0:
        out += p * np.log(p / q)
    if p < 1:
        out += (1 - p) * np.log((1 - p) / (1 - q))
    return float(out)


def kl_gaussian(mu1: float, mu2: float, variance: float = 1.0) -> float:
    return (mu1 - mu2) ** 2 / (2 * variance)


def regret_lower_bound(means, horizon: float, family: str = "bernoulli", variance: float = 1.0) -> float:
    """log N times the sum over suboptimal arms of gap / KL(arm, best)."""
    means = np.asarray(means, dtype=float)
    best = means.max()
    total = 0.0
    for mu in means:
        gap = best - mu
        if gap <= 0:
            continue
        if family == "bernoulli":
            div = kl_bernoulli(mu, best)
        elif family == "gaussian":
            div = kl_gaussian(mu, best, variance)
        else:
            raise ValueError(f"unknown family {family!r}")
        total += gap / div
    return float(np.log(horizon) * total)
