"""EM estimation of per-level delay-flag transitions, latent weights and Markov accuracy."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .dtmc import DtmcParams


class EmptyHistoryError(ValueError):
    pass


class ObservationHistory:
    """Transition counts h[g, a, b] plus channel level steps for one (slice, arm).

    With `window` set, only the last `window` committed batches are kept.
    """

    def __init__(self, levels: int, window: int | None = None):
        self.levels = levels
        self.window = window
        self.counts = np.zeros((levels, 2, 2), dtype=np.int64)
        self.steps_up = np.zeros(levels, dtype=np.int64)
        self.steps_down = np.zeros(levels, dtype=np.int64)
        self.visits = np.zeros(levels, dtype=np.int64)  # level-step opportunities
        self.occupancy = np.zeros(2 * levels, dtype=np.int64)  # state visit counts
        self._batches: deque | None = deque() if window else None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def record_transition(self, g: int, a: int, b: int) -> "ObservationHistory":
        if not (0 <= g < self.levels and a in (0, 1) and b in (0, 1)):
            raise ValueError(f"invalid transition ({g}, {a}, {b})")
        self.counts[g, a, b] += 1
        return self

    def _fields(self):
        return (self.counts, self.steps_up, self.steps_down, self.visits, self.occupancy)

    def add_batch(self, counts, up, down, visits, occupancy):
        batch = (counts, up, down, visits, occupancy)
        for acc, x in zip(self._fields(), batch):
            acc += x
        if self._batches is not None:
            self._batches.append(batch)
            while len(self._batches) > self.window:
                for acc, x in zip(self._fields(), self._batches.popleft()):
                    acc -= x

    def record_sequence(self, levels: np.ndarray, flags: np.ndarray):
        """Add the transitions of one contiguous (level, flag) trajectory as a batch."""
        self.add_batch(*sequence_counts(levels, flags, self.levels))

    def to_text(self) -> str:
        lines = ["# level,from_flag,to_flag,count"]
        for g, a, b in zip(*np.nonzero(self.counts)):
            lines.append(f"{g},{a},{b},{self.counts[g, a, b]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, levels: int) -> "ObservationHistory":
        h = cls(levels)
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                g, a, b, c = (int(x) for x in line.split(","))
                h.record_transition(g, a, b)
                h.counts[g, a, b] += c - 1
        return h


def sequence_counts(levels: np.ndarray, flags: np.ndarray, G: int):
    """Count (g, d, d') transitions and single level steps along a trajectory.

    A jump of k levels is booked as k single steps, each counted as one step
    opportunity at its origin level.
    """
    levels = np.asarray(levels, dtype=np.int64)
    flags = np.asarray(flags, dtype=np.int64)
    g0, a, b = levels[:-1], flags[:-1], flags[1:]
    counts = np.bincount(g0 * 4 + a * 2 + b, minlength=4 * G).reshape(G, 2, 2)
    diff = levels[1:] - g0
    up = np.zeros(G, dtype=np.int64)
    down = np.zeros(G, dtype=np.int64)
    extra = np.zeros(G, dtype=np.int64)
    for k in range(1, G):
        src = g0[diff >= k] + (k - 1)
        np.add.at(up, src, 1)
        src = g0[diff <= -k] - (k - 1)
        np.add.at(down, src, 1)
    # intermediate levels crossed during a multi-level jump also count as visits
    for k in range(2, G):
        np.add.at(extra, g0[diff >= k] + (k - 1), 1)
        np.add.at(extra, g0[diff <= -k] - (k - 1), 1)
    visits = np.bincount(g0, minlength=G) + extra
    occupancy = np.bincount(levels + flags * G, minlength=2 * G)
    return counts, up, down, visits, occupancy


@dataclass(frozen=True)
class LatentEstimate:
    rho: np.ndarray  # (W, 2, 2), rows over the to-flag sum to 1
    level_posterior: np.ndarray  # (G, W)
    prior: np.ndarray  # (W,)
    converged: bool
    iterations: int
    changes: tuple = ()  # max parameter change per iteration

    @property
    def posterior(self) -> np.ndarray:
        """Posterior over w for every (g, a, b); identical across (a, b) of a level."""
        G, W = self.level_posterior.shape
        return np.broadcast_to(self.level_posterior[:, None, None, :], (G, 2, 2, W))

    @property
    def latent_levels(self) -> int:
        return len(self.prior)

    def level_rho(self) -> np.ndarray:
        """Per-channel-level transition rows, mixing components by the level posterior."""
        return np.einsum("gw,wab->gab", self.level_posterior, self.rho)


def _log_likelihood(h2, rho2):
    """sum_ab h[g,ab] log rho[w,ab] for flattened (G, 4) counts and (W, 4) rows; 0 log 0 = 0."""
    zero = rho2 <= 0
    ll = h2 @ np.log(np.where(zero, 1.0, rho2)).T
    if zero.any():
        ll[((h2 > 0).astype(float) @ zero.T.astype(float)) > 0] = -np.inf
    return ll


def _level_posterior(h, rho, prior):
    """Pr(component w | all transitions at level g), shape (G, W)."""
    ll = _log_likelihood(h.reshape(len(h), 4), rho.reshape(len(rho), 4))
    with np.errstate(divide="ignore"):
        lp = np.log(prior)[None] + ll
    lp -= lp.max(axis=1, keepdims=True)
    post = np.exp(lp)
    return post / post.sum(axis=1, keepdims=True)


def em_estimate(history: ObservationHistory, max_iter: int = 500, tol: float = 1e-6,
                latent_levels: int | None = None, warm: LatentEstimate | None = None) -> LatentEstimate:
    """Mixture EM: each channel level's transitions come from one latent component.

    The posterior of a level conditions on all transitions seen at that level,
    which is what lets the components separate.
    """
    h = history.counts.astype(float)
    if h.sum() == 0:
        raise EmptyHistoryError("empty history")
    G = h.shape[0]
    W = latent_levels or G
    if warm is not None and warm.rho.shape[0] == W:
        rho, prior = warm.rho.copy(), warm.prior.copy()
    else:
        rho = np.full((W, 2, 2), 0.5)
        for w in range(min(W, G)):
            rho[w] = (h[w] + 1) / (h[w].sum(axis=1, keepdims=True) + 2)
        prior = np.full(W, 1.0 / W)
    hg = h.sum(axis=(1, 2))
    h2 = h.reshape(G, 4)
    changes = []
    converged = False
    post = np.tile(prior, (G, 1))
    it = 0
    for it in range(1, max_iter + 1):
        post = _level_posterior(h, rho, prior)
        num = (post.T @ h2).reshape(W, 2, 2)
        den = num.sum(axis=-1, keepdims=True)
        new_rho = np.where(den > 0, num / np.where(den > 0, den, 1), rho)
        new_prior = (hg[:, None] * post).sum(axis=0) / hg.sum()
        ch = max(np.abs(new_rho - rho).max(), np.abs(new_prior - prior).max())
        changes.append(float(ch))
        rho, prior = new_rho, new_prior
        if ch < tol:
            converged = True
            break
    # final posterior consistent with the returned parameters
    post = _level_posterior(h, rho, prior)
    return LatentEstimate(rho, post, prior, converged, it, tuple(changes))


def latent_weights(estimate: LatentEstimate, history: ObservationHistory) -> np.ndarray:
    """Weight of each latent component: summed probability of the observed transitions."""
    pair_counts = history.counts.sum(axis=0).astype(float)  # (2, 2)
    W = estimate.latent_levels
    if pair_counts.sum() == 0:
        return np.full(W, 1.0 / W)
    num = np.einsum("ab,wab->w", pair_counts, estimate.rho)
    return num / num.sum()


def posterior_weights(estimate: LatentEstimate, history: ObservationHistory) -> np.ndarray:
    """Pr(w | history): the prior times the likelihood of every observed transition under w.

    Uniform-ish with little data and sharpening towards one-hot as evidence
    accumulates, so the resulting accuracy value falls from 1 towards 1/W.
    """
    pair_counts = history.counts.sum(axis=0).astype(float)
    W = estimate.latent_levels
    if pair_counts.sum() == 0:
        return np.full(W, 1.0 / W)
    # floor keeps a component that rules out some observed pair comparable to the others
    rho = np.maximum(estimate.rho, 1e-12)
    prior = np.maximum(estimate.prior, 1e-300)
    lp = np.log(prior) + xlogy(pair_counts[None], rho).sum(axis=(1, 2))
    lp -= lp.max()
    w = np.exp(lp)
    return w / w.sum()


WEIGHTS = {"formula": latent_weights, "posterior": posterior_weights}


def inferred_transition(a: int, b: int, estimate: LatentEstimate, omega: np.ndarray) -> float:
    return float(np.dot(omega, estimate.rho[:, a, b]))


def markov_accuracy(omega) -> float:
    omega = np.asarray(omega, dtype=float)
    # scale-free; dividing by the max makes uniform and one-hot inputs evaluate exactly
    omega = omega / omega.max()
    return float(omega.sum() ** 2 / (len(omega) * np.sum(omega ** 2)))


def dtmc_params_from_estimates(estimate: LatentEstimate, history: ObservationHistory) -> DtmcParams:
    """Chain parameters: flag flips from the estimate, level steps from empirical frequencies."""
    G = history.levels
    rows = estimate.level_rho()
    m = rows[:, 0, 1].copy()
    l = rows[:, 1, 0].copy()
    vis = history.visits.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(vis > 0, history.steps_up / np.maximum(vis, 1), 0.0)
        q = np.where(vis > 0, history.steps_down / np.maximum(vis, 1), 0.0)
    p[-1] = 0.0
    q[0] = 0.0
    for g in range(G):
        worst = p[g] + q[g] + max(m[g], l[g])
        if worst > 1:
            s = 1.0 / worst
            p[g] *= s
            q[g] *= s
            m[g] *= s
            l[g] *= s
    return DtmcParams(p, q, m, l)
