"""Per-TTI traffic demand and channel quality generation, and the service mapping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import McsTable, SliceSpec, SystemConfig, lookup_mcs

TRAFFIC, CHANNEL = 0, 1


def slice_rng(seed: int, slice_id: int, stream: int) -> np.random.Generator:
    """Independent generator per (run seed, slice, stream kind)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, slice_id, stream])))


@dataclass(frozen=True)
class TrafficSample:
    slice_id: int
    tti: int
    demand_bits: int


@dataclass(frozen=True)
class ChannelSample:
    slice_id: int
    tti: int
    snr_db: float
    level: int


def bits_per_tti(rate_mbps, tti_ms: float):
    return np.asarray(rate_mbps, dtype=float) * 1e3 * tti_ms


def draw_traffic_epoch(spec: SliceSpec, epoch: int, n_ttis: int, rng: np.random.Generator,
                       tti_ms: float = 1.0) -> np.ndarray:
    mean = bits_per_tti(spec.mean_rate(epoch), tti_ms)
    std = bits_per_tti(spec.traffic_std, tti_ms)
    x = rng.normal(mean, std, size=n_ttis) if std > 0 else np.full(n_ttis, float(mean))
    return np.maximum(np.rint(x), 0).astype(np.int64)


def draw_traffic(spec: SliceSpec, epoch: int, tti: int, rng: np.random.Generator,
                 tti_ms: float = 1.0) -> TrafficSample:
    return TrafficSample(spec.id, tti, int(draw_traffic_epoch(spec, epoch, 1, rng, tti_ms)[0]))


class SnrMap:
    """Affine map from Rayleigh draws to dB plus level quantization.

    The map is pinned so that the 1st/99th percentiles of a Rayleigh with the
    reference scale land on [snr_min, snr_max]; a slice's own scale then moves
    both the spread and the mean of its SNR.
    """

    def __init__(self, config: SystemConfig):
        tau = config.rayleigh_ref_scale
        self.lo_q = tau * np.sqrt(-2 * np.log(0.99))
        self.hi_q = tau * np.sqrt(-2 * np.log(0.01))
        self.snr_min, self.snr_max = config.snr_min_db, config.snr_max_db
        self.levels = config.channel_levels
        self.slope = (self.snr_max - self.snr_min) / (self.hi_q - self.lo_q)

    def to_db(self, r):
        return self.snr_min + (np.asarray(r) - self.lo_q) * self.slope

    def level(self, snr_db):
        width = (self.snr_max - self.snr_min) / self.levels
        g = np.floor((np.asarray(snr_db) - self.snr_min) / width).astype(np.int64)
        return np.clip(g, 0, self.levels - 1)


def draw_rayleigh(spec: SliceSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.rayleigh(spec.rayleigh_scale, size=n)


def draw_channel_epoch(spec: SliceSpec, n_ttis: int, rng: np.random.Generator, snr_map: SnrMap):
    """Returns (raw draws, SNR in dB, quantized level) for one epoch."""
    raw = draw_rayleigh(spec, n_ttis, rng)
    snr = snr_map.to_db(raw)
    return raw, snr, snr_map.level(snr)


def draw_channel(spec: SliceSpec, tti: int, rng: np.random.Generator, snr_map: SnrMap) -> ChannelSample:
    _, snr, g = draw_channel_epoch(spec, 1, rng, snr_map)
    return ChannelSample(spec.id, tti, float(snr[0]), int(g[0]))


def zeta(prbs: int, snr_db: float, table: McsTable) -> int:
    if prbs < 0:
        raise ValueError("negative PRB count")
    return prbs * lookup_mcs(snr_db, table)[1]


def capacity_estimate(mcs_dist, bits_per_prb, epoch_ttis: int, prbs: int) -> float:
    """Average bits over an epoch given a distribution over MCS entries."""
    pi = np.asarray(mcs_dist, dtype=float)
    if abs(pi.sum() - 1) > 1e-9 or (pi < 0).any():
        raise ValueError("MCS distribution must be a probability vector")
    return float(np.dot(pi, np.asarray(bits_per_prb, dtype=float)) * epoch_ttis * prbs)
