"""TTI-level epoch loop, bandit orchestration and run traces."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .config import McsTable, SliceSpec, SystemConfig, allocation_matrix, enumerate_arms, load_mcs_table
from .dtmc import ReducibleChainError, build_transition_matrix, latency_ok_mass, limit_distribution, steady_state
from .env import CHANNEL, TRAFFIC, SnrMap, bits_per_tti, draw_channel_epoch, draw_traffic_epoch, slice_rng
from .latent import WEIGHTS, ObservationHistory, dtmc_params_from_estimates, em_estimate, markov_accuracy
from .policies import POLICIES, BanditState, laco_select, oracle_select, ts_select, ucb_select, update


REWARD_KINDS = ("auto", "model", "classic", "true")


@dataclass(frozen=True)
class LearnerConfig:
    em_max_iter: int = 500
    em_tol: float = 1e-6
    latent_levels: int | None = None  # defaults to the number of channel levels
    history_window: int | None = None  # plays of the arm kept in its history; None keeps all
    psi_scope: str = "arm"  # "arm" or "global" (one history per slice across arms)
    reward_update: str = "mean"  # "mean" or "overwrite"
    ts_prior_variance: float = 1.0
    fixed_psi: float | None = None  # pin psi for every arm (ablation / degeneracy checks)
    psi_weights: str = "posterior"  # "posterior" or "formula" (summed transition probabilities)
    classic_load: str = "demand"  # load term of the classic reward: offered "demand" or queue "backlog"
    reward_kind: str = "auto"  # "auto" (laco: model, ucb/ts: classic), "model", "classic" or "true"

    def __post_init__(self):
        if self.psi_scope not in ("arm", "global"):
            raise ValueError("psi_scope must be 'arm' or 'global'")
        if self.psi_weights not in WEIGHTS:
            raise ValueError(f"psi_weights must be one of {sorted(WEIGHTS)}")
        if self.classic_load not in ("demand", "backlog"):
            raise ValueError("classic_load must be 'demand' or 'backlog'")
        if self.reward_kind not in REWARD_KINDS:
            raise ValueError(f"reward_kind must be one of {REWARD_KINDS}")
        if self.reward_update not in ("mean", "overwrite"):
            raise ValueError("reward_update must be 'mean' or 'overwrite'")
        if self.em_max_iter < 1 or self.em_tol <= 0:
            raise ValueError("em_max_iter must be >= 1 and em_tol > 0")
        if self.history_window is not None and self.history_window < 1:
            raise ValueError("history_window must be >= 1")
        if self.ts_prior_variance < 0:
            raise ValueError("ts_prior_variance must be >= 0")


@dataclass
class EpochDraws:
    arrivals: np.ndarray  # (I, T) bits
    snr_db: np.ndarray  # (I, T)
    levels: np.ndarray  # (I, T)
    bits_per_prb: np.ndarray  # (I, T)


class VirtualQueues:
    """Per-slice FIFO ring buffers with drop and latency accounting."""

    def __init__(self, max_wait: Sequence[int], expire_after: Sequence[int]):
        self.max_wait = np.asarray(max_wait, dtype=np.int64)
        self.expire_after = np.asarray(expire_after, dtype=np.int64)
        n = len(self.max_wait)
        depth = int(self.expire_after.max()) + 2
        self.q_tti = np.zeros((n, depth), dtype=np.int64)
        self.q_rem = np.zeros((n, depth), dtype=np.int64)
        self.state = np.zeros((n, 3), dtype=np.int64)
        self.served_hist = np.zeros((n, depth), dtype=np.int64)  # bits served per latency (TTIs)
        self.totals = np.zeros((n, K.N_TOTALS), dtype=np.int64)

    @property
    def backlog(self) -> np.ndarray:
        return self.state[:, K.BACKLOG].copy()

    def copy_empty(self) -> "VirtualQueues":
        return VirtualQueues(self.max_wait, self.expire_after)


class Network:
    """Slices, their random streams and their queues for one run."""

    def __init__(self, system: SystemConfig, slices: Sequence[SliceSpec], seed: int | None = None,
                 table: McsTable | None = None):
        self.system = system
        self.slices = tuple(slices)
        self.seed = system.seed if seed is None else seed
        self.table = table or load_mcs_table()
        self.snr_map = SnrMap(system)
        self.traffic_rng = [slice_rng(self.seed, s.id, TRAFFIC) for s in self.slices]
        self.channel_rng = [slice_rng(self.seed, s.id, CHANNEL) for s in self.slices]
        mw = [s.max_wait_ttis(system.tti_ms) for s in self.slices]
        exp = [2 * m if system.serve_late else m for m in mw]
        self.queues = VirtualQueues(mw, exp)
        self.tti = 0

    @property
    def num_slices(self) -> int:
        return len(self.slices)

    def draw(self, epoch: int) -> EpochDraws:
        T = self.system.epoch_ttis
        arr, snr, lev = [], [], []
        for s, tr, ch in zip(self.slices, self.traffic_rng, self.channel_rng):
            arr.append(draw_traffic_epoch(s, epoch, T, tr, self.system.tti_ms))
            _, db, g = draw_channel_epoch(s, T, ch, self.snr_map)
            snr.append(db)
            lev.append(g)
        snr = np.array(snr)
        return EpochDraws(np.array(arr), snr, np.array(lev), self.table.bits_for(snr))


@dataclass
class SliceOutcome:
    totals: np.ndarray  # (N_TOTALS,)
    flags: np.ndarray  # (T,) delay flag per TTI


def serve_slice(queues: VirtualQueues, i: int, draws: EpochDraws, prbs: int, t0: int) -> SliceOutcome:
    T = draws.arrivals.shape[1]
    flags = np.zeros(T, dtype=np.int8)
    budget = prbs * draws.bits_per_prb[i]
    totals = K.serve_epoch(draws.arrivals[i], budget, t0, queues.max_wait[i], queues.expire_after[i],
                           queues.q_tti[i], queues.q_rem[i], queues.state[i], queues.served_hist[i], flags)
    queues.totals[i] += totals
    return SliceOutcome(totals, flags)


@dataclass
class EpochRecord:
    epoch: int
    arm: int
    offered: np.ndarray
    served: np.ndarray
    dropped: np.ndarray
    late: np.ndarray
    backlog: np.ndarray
    latency_bits: np.ndarray  # sum of bits x latency (TTIs)
    max_latency_ms: np.ndarray
    mean_latency_ms: np.ndarray
    mean_snr_db: np.ndarray
    ok_fraction: np.ndarray  # share of TTIs with the delay flag clear
    reward: float
    psi: float = 1.0
    true_reward: float = float("nan")
    oracle_best: float = float("nan")


def run_epoch(allocation, net: Network, epoch: int, histories=None, draws: EpochDraws | None = None,
              arm: int = -1) -> tuple[EpochRecord, list[SliceOutcome], EpochDraws]:
    """Serve one epoch under a fixed PRB split and record flag transitions per slice."""
    draws = draws if draws is not None else net.draw(epoch)
    T = net.system.epoch_ttis
    outs = []
    for i in range(net.num_slices):
        out = serve_slice(net.queues, i, draws, int(allocation[i]), net.tti)
        outs.append(out)
        if histories is not None and histories[i] is not None:
            for h in np.atleast_1d(histories[i]):
                h.record_sequence(draws.levels[i], out.flags)
    net.tti += T
    rec = _record(epoch, arm, net, outs, draws)
    return rec, outs, draws


def _record(epoch, arm, net, outs, draws) -> EpochRecord:
    tot = np.array([o.totals for o in outs])
    tti_ms = net.system.tti_ms
    served = tot[:, K.SERVED]
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_lat = np.where(served > 0, tot[:, K.LAT_BITS] / np.maximum(served, 1), 0.0) * tti_ms
    return EpochRecord(
        epoch=epoch, arm=arm, offered=tot[:, K.OFFERED], served=served, dropped=tot[:, K.DROPPED],
        late=tot[:, K.LATE], backlog=net.queues.backlog, latency_bits=tot[:, K.LAT_BITS],
        max_latency_ms=tot[:, K.MAX_LAT] * tti_ms, mean_latency_ms=mean_lat,
        mean_snr_db=draws.snr_db.mean(axis=1), ok_fraction=np.array([1 - o.flags.mean() for o in outs]),
        reward=float("nan"))


def run_epoch_round_robin(net: Network, epoch: int, draws: EpochDraws | None = None):
    draws = draws if draws is not None else net.draw(epoch)
    q = net.queues
    I, T = draws.arrivals.shape
    flags = np.zeros((I, T), dtype=np.int8)
    used = np.zeros(I, dtype=np.int64)
    tot = K.serve_epoch_rr(draws.arrivals, draws.bits_per_prb, net.tti, net.system.capacity_prbs,
                           net.system.chunk_prbs, q.max_wait, q.expire_after, q.q_tti, q.q_rem,
                           q.state, q.served_hist, flags, used)
    q.totals += tot
    net.tti += T
    outs = [SliceOutcome(tot[i], flags[i]) for i in range(I)]
    return _record(epoch, -1, net, outs, draws), outs, draws


# ---------------------------------------------------------------- replay oracle

def slice_replays(net: Network, draws: EpochDraws, chunk_values: np.ndarray):
    """ok-fraction, mean budget and mean backlog per (slice, PRB value), each replayed from empty."""
    I = net.num_slices
    V = len(chunk_values)
    T = draws.arrivals.shape[1]
    ok = np.zeros((I, V))
    budget = np.zeros((I, V))
    backlog = np.zeros((I, V))
    q = net.queues.copy_empty()
    for i in range(I):
        for v, y in enumerate(chunk_values):
            q.state[i] = 0
            flags = np.zeros(T, dtype=np.int8)
            b = int(y) * draws.bits_per_prb[i]
            tot = K.serve_epoch(draws.arrivals[i], b, 0, q.max_wait[i], q.expire_after[i], q.q_tti[i],
                                q.q_rem[i], q.state[i], q.served_hist[i], flags)
            ok[i, v] = 1 - flags.mean()
            budget[i, v] = b.mean()
            backlog[i, v] = tot[K.BACKLOG_SUM] / T
    return ok, budget, backlog


def arm_true_rewards(ok: np.ndarray, alloc_idx: np.ndarray, eta: float) -> np.ndarray:
    """Latency reward per arm: mean over slices of (ok fraction)^eta."""
    I = ok.shape[0]
    return np.mean([ok[i, alloc_idx[:, i]] ** eta for i in range(I)], axis=0)


def arm_classic_rewards(budget, load, alloc_idx, delta_ttis) -> np.ndarray:
    """Classic reward per arm from per-(slice, PRB value) budget and load, both bits per TTI."""
    I = budget.shape[0]
    return np.sum([budget[i, alloc_idx[:, i]] - load[i, alloc_idx[:, i]] / delta_ttis[i]
                   for i in range(I)], axis=0)


def nominal_draws(net: Network, seed: int) -> EpochDraws:
    """One epoch at each slice's nominal mean load without traffic noise."""
    T = net.system.epoch_ttis
    arr, snr = [], []
    for s in net.slices:
        arr.append(np.full(T, int(round(float(bits_per_tti(s.nominal_rate(), net.system.tti_ms))))))
        _, db, _ = draw_channel_epoch(s, T, slice_rng(seed, s.id, 2), net.snr_map)
        snr.append(db)
    snr = np.array(snr)
    return EpochDraws(np.array(arr, dtype=np.int64), snr, net.snr_map.level(snr), net.table.bits_for(snr))


# ---------------------------------------------------------------- model reward

def model_estimate(hist: ObservationHistory, learner: LearnerConfig, eta: float):
    """(latency-ok mass ** eta, psi) for one slice history."""
    if hist.total == 0:
        return 0.0, 1.0
    est = em_estimate(hist, learner.em_max_iter, learner.em_tol, learner.latent_levels)
    P = build_transition_matrix(dtmc_params_from_estimates(est, hist))
    try:
        pi = steady_state(P)
    except ReducibleChainError:
        pi = limit_distribution(P, hist.occupancy / hist.occupancy.sum())
    psi = markov_accuracy(WEIGHTS[learner.psi_weights](est, hist))
    return latency_ok_mass(pi) ** eta, psi


# ---------------------------------------------------------------- experiment loop

@dataclass
class RunTrace:
    system: SystemConfig
    slices: tuple
    policy: str
    seed: int
    records: list = field(default_factory=list)
    latency_hist: np.ndarray | None = None  # (I, depth) served bits per latency in TTIs
    oracle_means: np.ndarray | None = None  # (N, arms) when tracked
    allocations: np.ndarray | None = None

    @property
    def arms(self) -> np.ndarray:
        return np.array([r.arm for r in self.records], dtype=np.int64)

    @property
    def cumulative_dropped(self) -> np.ndarray:
        return np.cumsum([r.dropped for r in self.records], axis=0)

    def totals(self) -> dict:
        recs = self.records
        off = np.sum([r.offered for r in recs], axis=0)
        srv = np.sum([r.served for r in recs], axis=0)
        drp = np.sum([r.dropped for r in recs], axis=0)
        lat = np.sum([r.latency_bits for r in recs], axis=0)
        return dict(offered=off, served=srv, dropped=drp, late=np.sum([r.late for r in recs], axis=0),
                    backlog=recs[-1].backlog if recs else np.zeros(len(self.slices), dtype=np.int64),
                    latency_bits=lat)

    def mean_delay_ms(self) -> float:
        t = self.totals()
        return float(t["latency_bits"].sum() / max(t["served"].sum(), 1) * self.system.tti_ms)


class Runner:
    """One seeded run of a policy over the configured horizon."""

    def __init__(self, system: SystemConfig, slices: Sequence[SliceSpec], policy: str,
                 learner: LearnerConfig | None = None, seed: int | None = None,
                 oracle: str | None = None, stationary_means: np.ndarray | None = None,
                 table: McsTable | None = None):
        self.system = system
        self.slices = tuple(slices)
        self.policy = policy
        self.learner = learner or LearnerConfig()
        self.seed = system.seed if seed is None else seed
        self.net = Network(system, self.slices, self.seed, table)
        self.arms = enumerate_arms(len(self.slices), system)
        self.alloc = allocation_matrix(self.arms)
        self.chunk_values = np.arange(0, system.capacity_prbs + 1, system.chunk_prbs)
        self.alloc_idx = self.alloc // system.chunk_prbs
        self.delta_ttis = np.array([max(s.max_wait_ttis(system.tti_ms), 1) for s in self.slices], dtype=float)
        self.state = BanditState(len(self.arms), overwrite=self.learner.reward_update == "overwrite")
        self.policy_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, 2**31 - 1])))
        self.histories: dict = {}
        self.global_histories = [self._new_history(None) for _ in self.slices]
        self.oracle = oracle if oracle else ("epoch" if policy == "oracle" else None)
        self.stationary_means = stationary_means
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        kind = self.learner.reward_kind
        if kind == "auto":
            kind = {"laco": "model", "ucb": "classic", "ts": "classic"}.get(policy, "true")
        self.reward_kind = "true" if policy in ("oracle", "rr") else kind
        if self.reward_kind == "true" and self.oracle is None and policy != "rr":
            self.oracle = "epoch"
        self.classic_range = None
        if self.reward_kind == "classic":
            draws = nominal_draws(self.net, self.seed)
            ok, budget, backlog = slice_replays(self.net, draws, self.chunk_values)
            if self.learner.classic_load == "demand":
                backlog = np.repeat(draws.arrivals.mean(axis=1)[:, None], len(self.chunk_values), axis=1)
            raw = arm_classic_rewards(budget, backlog, self.alloc_idx, self.delta_ttis)
            self.classic_range = (float(raw.min()), float(raw.max()))

    def _new_history(self, arm):
        window = self.learner.history_window if arm is not None else None
        return ObservationHistory(self.system.channel_levels, window)

    def _history(self, i, arm):
        key = (i, arm)
        if key not in self.histories:
            self.histories[key] = self._new_history(arm)
        return self.histories[key]

    def normalize_classic(self, raw: float) -> float:
        lo, hi = self.classic_range
        if hi <= lo:
            return 0.5
        return float(np.clip((raw - lo) / (hi - lo), 0.0, 1.0))

    def select(self, n: int, oracle_row) -> int:
        A = len(self.arms)
        if self.policy == "oracle":
            return oracle_select(oracle_row)
        if n < A:
            return n  # initialization sweep
        if self.policy == "laco":
            return laco_select(self.state, n)
        if self.policy == "ucb":
            return ucb_select(self.state, n)
        if self.policy == "ts":
            return ts_select(self.state, n, self.policy_rng, self.learner.ts_prior_variance)
        raise ValueError(f"unknown policy {self.policy!r}")

    def step(self, n: int) -> EpochRecord:
        net = self.net
        draws = net.draw(n)
        oracle_row = None
        if self.oracle == "epoch":
            ok, _, _ = slice_replays(net, draws, self.chunk_values)
            oracle_row = arm_true_rewards(ok, self.alloc_idx, self.system.eta)
        elif self.oracle == "stationary":
            oracle_row = self.stationary_means

        if self.policy == "rr":
            rec, outs, _ = run_epoch_round_robin(net, n, draws)
            rec.reward = float(np.mean(rec.ok_fraction ** self.system.eta))
            rec.true_reward = rec.reward
            return rec

        arm = self.select(n, oracle_row)
        hists = None
        if self.reward_kind == "model":
            hists = []
            for i in range(len(self.slices)):
                hs = [self._history(i, arm)]
                if self.learner.psi_scope == "global":
                    hs.append(self.global_histories[i])
                hists.append(hs)
        rec, outs, _ = run_epoch(self.alloc[arm], net, n, hists, draws, arm)

        if self.reward_kind == "model":
            vals, psis = [], []
            for i in range(len(self.slices)):
                r, psi = model_estimate(self._history(i, arm), self.learner, self.system.eta)
                if self.learner.psi_scope == "global":
                    _, psi = model_estimate(self.global_histories[i], self.learner, self.system.eta)
                vals.append(r)
                psis.append(psi)
            reward = float(np.mean(vals))
            psi = self.learner.fixed_psi if self.learner.fixed_psi is not None else float(np.mean(psis))
            if self.policy == "laco":
                self.state.psi[arm] = psi
            rec.psi = psi
        elif self.reward_kind == "classic":
            T = self.system.epoch_ttis
            if self.learner.classic_load == "demand":
                load = draws.arrivals.mean(axis=1)
            else:
                load = np.array([o.totals[K.BACKLOG_SUM] / T for o in outs])
            raw = sum(float(np.mean(self.alloc[arm, i] * draws.bits_per_prb[i])) - load[i] / self.delta_ttis[i]
                      for i in range(len(self.slices)))
            reward = self.normalize_classic(raw)
        else:
            reward = float(oracle_row[arm])
        update(self.state, arm, reward)
        rec.reward = reward
        if oracle_row is not None:
            rec.true_reward = float(oracle_row[arm])
            rec.oracle_best = float(np.max(oracle_row))
        else:
            rec.true_reward = float(np.mean(rec.ok_fraction ** self.system.eta))
        self._last_oracle = oracle_row
        return rec

    def run(self, horizon: int | None = None) -> RunTrace:
        N = horizon or self.system.horizon
        trace = RunTrace(self.system, self.slices, self.policy, self.seed, allocations=self.alloc)
        oracle_rows = []
        for n in range(N):
            rec = self.step(n)
            trace.records.append(rec)
            if self.oracle is not None and self.policy != "rr":
                oracle_rows.append(self._last_oracle)
        trace.latency_hist = self.net.queues.served_hist.copy()
        if oracle_rows:
            trace.oracle_means = np.array(oracle_rows)
        return trace


def run_experiment(system: SystemConfig, slices: Sequence[SliceSpec], policy: str, horizon: int | None = None,
                   learner: LearnerConfig | None = None, seed: int | None = None, oracle: str | None = None,
                   stationary_means=None) -> RunTrace:
    return Runner(system, slices, policy, learner, seed, oracle, stationary_means).run(horizon)


def stationary_arm_means(system: SystemConfig, slices: Sequence[SliceSpec], seed: int, epochs: int = 20) -> np.ndarray:
    """Per-arm expected latency reward, averaged over independent replayed epochs."""
    net = Network(system, slices, seed)
    arms = allocation_matrix(enumerate_arms(len(slices), system))
    values = np.arange(0, system.capacity_prbs + 1, system.chunk_prbs)
    ok_acc = np.zeros((len(slices), len(values)))
    for n in range(epochs):
        ok, _, _ = slice_replays(net, net.draw(n), values)
        ok_acc += ok ** system.eta
    ok_acc /= epochs
    idx = arms // system.chunk_prbs
    return np.mean([ok_acc[i, idx[:, i]] for i in range(len(slices))], axis=0)


# ---------------------------------------------------------------- CSV

def trace_columns(num_slices: int) -> list[str]:
    cols = ["epoch", "arm", "reward", "psi", "true_reward", "oracle_best"]
    for i in range(num_slices):
        cols += [f"s{i}_{k}" for k in ("offered", "served", "dropped", "late", "backlog", "latency_bits",
                                       "mean_latency_ms", "max_latency_ms", "mean_snr_db", "ok_fraction")]
    return cols


def trace_to_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    I = len(trace.slices)
    w.writerow(trace_columns(I))
    for r in trace.records:
        row = [r.epoch, r.arm, repr(r.reward), repr(r.psi), repr(r.true_reward), repr(r.oracle_best)]
        for i in range(I):
            row += [int(r.offered[i]), int(r.served[i]), int(r.dropped[i]), int(r.late[i]), int(r.backlog[i]),
                    int(r.latency_bits[i]), repr(float(r.mean_latency_ms[i])), repr(float(r.max_latency_ms[i])),
                    repr(float(r.mean_snr_db[i])), repr(float(r.ok_fraction[i]))]
        w.writerow(row)
    return buf.getvalue()
