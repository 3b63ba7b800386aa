"""Channel-level / delay-flag Markov chain and its stationary distribution.

State s = g + d*G for channel level g in [0, G) and delay flag d (1 = latency
tolerance exceeded).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ReducibleChainError(ValueError):
    pass


@dataclass(frozen=True)
class DtmcParams:
    up: np.ndarray
    down: np.ndarray
    violate: np.ndarray
    recover: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.up, self.down, self.violate, self.recover)]
        G = len(arrs[0])
        if G < 1 or any(len(a) != G for a in arrs):
            raise ValueError("all parameter vectors need the same length >= 1")
        for name, a in zip(("up", "down", "violate", "recover"), arrs):
            if ((a < 0) | (a > 1)).any():
                raise ValueError(f"{name} entries must lie in [0, 1]")
            object.__setattr__(self, name, a)
        if self.up[-1] != 0 or self.down[0] != 0:
            raise ValueError("boundary levels cannot step outside the chain")
        for x in (self.violate, self.recover):
            if (1 - self.up - self.down - x < -1e-12).any():
                raise ValueError("negative diagonal: inconsistent probabilities")

    @property
    def levels(self) -> int:
        return len(self.up)


def build_transition_matrix(params: DtmcParams) -> np.ndarray:
    G = params.levels
    P = np.zeros((2 * G, 2 * G))
    for d, x in ((0, params.violate), (1, params.recover)):
        o = d * G
        diag = np.maximum(1 - params.up - params.down - x, 0.0)
        P[o + np.arange(G), o + np.arange(G)] = diag
        P[o + np.arange(G - 1), o + np.arange(1, G)] = params.up[:-1]
        P[o + np.arange(1, G), o + np.arange(G - 1)] = params.down[1:]
        # cross block: same level, flip the delay flag
        P[o + np.arange(G), (1 - d) * G + np.arange(G)] = x
    return P


def is_irreducible(P: np.ndarray) -> bool:
    """Strong connectivity via the transitive closure of the transition graph."""
    n = P.shape[0]
    reach = (P > 0) | np.eye(n, dtype=bool)
    for _ in range(max(1, int(np.ceil(np.log2(n))))):
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
    return bool(reach.all())


def steady_state(P: np.ndarray) -> np.ndarray:
    if not is_irreducible(P):
        raise ReducibleChainError("reducible chain: stationary distribution is not unique")
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def limit_distribution(P: np.ndarray, initial: np.ndarray, tol: float = 1e-13, max_squarings: int = 60) -> np.ndarray:
    """Long-run distribution from a given start; also defined for reducible chains.

    Uses the lazy chain (I+P)/2 so periodic chains converge, squared until stable.
    """
    Q = 0.5 * (np.eye(P.shape[0]) + P)
    for _ in range(max_squarings):
        Q2 = Q @ Q
        if np.abs(Q2 - Q).max() < tol:
            Q = Q2
            break
        Q = Q2
    pi = np.asarray(initial, dtype=float) @ Q
    return pi / pi.sum()


def latency_ok_mass(pi: np.ndarray) -> float:
    G = len(pi) // 2
    return float(np.sum(pi[:G]))
