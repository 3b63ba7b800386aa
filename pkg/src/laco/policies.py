"""Arm-selection policies and reward functions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import round_robin_alloc
from .config import McsTable, lookup_mcs
from .dtmc import latency_ok_mass

POLICIES = ("laco", "ucb", "ts", "rr", "oracle")


class UninitializedError(RuntimeError):
    pass


@dataclass
class BanditState:
    n_arms: int
    overwrite: bool = False  # keep only the latest reward instead of the running mean
    counts: np.ndarray = field(init=False)
    sums: np.ndarray = field(init=False)
    means: np.ndarray = field(init=False)
    psi: np.ndarray = field(init=False)

    def __post_init__(self):
        self.counts = np.zeros(self.n_arms, dtype=np.int64)
        self.sums = np.zeros(self.n_arms)
        self.means = np.zeros(self.n_arms)
        self.psi = np.ones(self.n_arms)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def initialized(self) -> bool:
        return bool((self.counts > 0).all())


def update(state: BanditState, arm: int, reward: float) -> BanditState:
    state.counts[arm] += 1
    state.sums[arm] += reward
    state.means[arm] = reward if state.overwrite else state.sums[arm] / state.counts[arm]
    return state


def _ucb_index(state: BanditState, psi: np.ndarray) -> np.ndarray:
    if not state.initialized:
        raise UninitializedError("every arm must be played once before index selection")
    bonus = np.sqrt(2 * np.log(state.total) / state.counts)
    return state.means + psi * bonus


def laco_select(state: BanditState, epoch: int = 0) -> int:
    return int(np.argmax(_ucb_index(state, state.psi)))


def ucb_select(state: BanditState, epoch: int = 0) -> int:
    return int(np.argmax(_ucb_index(state, np.ones(state.n_arms))))


def ts_select(state: BanditState, epoch: int, rng: np.random.Generator, prior_variance: float = 1.0) -> int:
    """Gaussian sampling with variance prior_variance/(z+1); unplayed arms draw from the prior."""
    std = np.sqrt(prior_variance / (state.counts + 1))
    return int(np.argmax(state.means + std * rng.standard_normal(state.n_arms)))


def oracle_select(true_means) -> int:
    return int(np.argmax(np.asarray(true_means)))


def round_robin_select(backlog_bits, bits_per_prb, tti: int, capacity: int, chunk: int = 1) -> np.ndarray:
    """PRBs per slice for a single TTI."""
    return round_robin_alloc(np.asarray(backlog_bits, dtype=np.int64),
                             np.asarray(bits_per_prb, dtype=np.int64), tti, capacity, chunk)


def model_reward(pi: np.ndarray, eta: float) -> float:
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    return latency_ok_mass(pi) ** eta


def classic_reward(allocation, snr_db, demand_bits, delta_ttis, table: McsTable) -> float:
    """Sum over slices of deliverable bits per TTI minus demand spread over the tolerance."""
    total = 0.0
    for y, s, lam, d in zip(allocation, snr_db, demand_bits, delta_ttis):
        total += y * lookup_mcs(s, table)[1] - lam / d
    return total
