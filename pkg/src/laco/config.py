"""Domain types, system configuration, MCS table and arm enumeration."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SystemConfig:
    capacity_prbs: int = 100
    chunk_prbs: int = 10
    tti_ms: float = 1.0
    epoch_ttis: int = 1000
    horizon: int = 500
    channel_levels: int = 4
    eta: float = 1.0
    seed: int = 0
    # SNR operating range; the reference Rayleigh scale fixes the affine map
    snr_min_db: float = 0.0
    snr_max_db: float = 30.0
    rayleigh_ref_scale: float = 0.3
    serve_late: bool = False

    def __post_init__(self):
        if self.capacity_prbs <= 0 or self.chunk_prbs <= 0:
            raise ValueError("capacity and chunk must be positive")
        if self.capacity_prbs % self.chunk_prbs:
            raise ValueError(f"chunk {self.chunk_prbs} does not divide capacity {self.capacity_prbs}")
        if self.channel_levels < 1:
            raise ValueError("need at least one channel level")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.epoch_ttis < 1 or self.horizon < 1:
            raise ValueError("epoch_ttis and horizon must be >= 1")
        if self.tti_ms <= 0:
            raise ValueError("tti_ms must be positive")
        if not self.snr_max_db > self.snr_min_db:
            raise ValueError("snr_max_db must exceed snr_min_db")
        if self.rayleigh_ref_scale <= 0:
            raise ValueError("rayleigh_ref_scale must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def num_chunks(self) -> int:
        return self.capacity_prbs // self.chunk_prbs


@dataclass(frozen=True)
class Sinusoid:
    low: float
    high: float
    period_epochs: float
    phase: float = 0.0

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ValueError("sinusoid needs 0 < low <= high")
        if self.period_epochs <= 0:
            raise ValueError("period must be positive")

    def mean_at(self, epoch):
        s = np.sin(2 * np.pi * np.asarray(epoch, dtype=float) / self.period_epochs + self.phase)
        return self.low + (self.high - self.low) * (1 + s) / 2


@dataclass(frozen=True)
class SliceSpec:
    id: int
    latency_ms: float
    traffic_mean: float  # Mb/s
    traffic_std: float = 0.0  # Mb/s
    throughput_sla: float = 0.0  # Mb/s, informational only
    modulation: Sinusoid | None = None
    rayleigh_scale: float = 0.3

    def __post_init__(self):
        if self.latency_ms <= 0:
            raise ValueError("latency tolerance must be positive")
        if self.traffic_std < 0 or self.traffic_mean < 0:
            raise ValueError("traffic mean/std must be non-negative")
        if self.rayleigh_scale <= 0:
            raise ValueError("rayleigh scale must be positive")

    def mean_rate(self, epoch):
        """Traffic mean in Mb/s at a given epoch."""
        if self.modulation is None:
            return np.full(np.shape(epoch), float(self.traffic_mean)) if np.ndim(epoch) else float(self.traffic_mean)
        return self.modulation.mean_at(epoch)

    def nominal_rate(self) -> float:
        if self.modulation is None:
            return float(self.traffic_mean)
        return (self.modulation.low + self.modulation.high) / 2

    def max_wait_ttis(self, tti_ms: float) -> int:
        return int(math.floor(self.latency_ms / tti_ms + 1e-9))


@dataclass(frozen=True)
class SlicingConfiguration:
    arm_index: int
    allocation: tuple[int, ...]


class ArmSet(Sequence):
    """Read-only sequence of slicing configurations backed by one (arms, slices) PRB matrix."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        self.matrix.flags.writeable = False

    def __len__(self) -> int:
        return len(self.matrix)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self[i] for i in range(*idx.indices(len(self)))]
        i = range(len(self))[idx]
        return SlicingConfiguration(i, tuple(int(x) for x in self.matrix[i]))

    def __repr__(self) -> str:
        return f"ArmSet({len(self)} arms over {self.matrix.shape[1]} slices)"


@dataclass(frozen=True)
class McsEntry:
    threshold_db: float
    mcs_index: int
    bits_per_prb: int


OUT_OF_RANGE = McsEntry(-math.inf, -1, 0)


@dataclass(frozen=True)
class McsTable:
    entries: tuple[McsEntry, ...]
    _thresholds: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty MCS table")
        th = [e.threshold_db for e in self.entries]
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("SNR thresholds must be strictly increasing")
        bits = [e.bits_per_prb for e in self.entries]
        if any(b < a for a, b in zip(bits, bits[1:])) or min(bits) <= 0:
            raise ValueError("bits per PRB must be positive and non-decreasing")
        object.__setattr__(self, "_thresholds", tuple(th))

    @property
    def thresholds(self) -> np.ndarray:
        return np.array(self._thresholds)

    @property
    def bits(self) -> np.ndarray:
        return np.array([e.bits_per_prb for e in self.entries], dtype=np.int64)

    def bits_for(self, snr_db) -> np.ndarray:
        """Vectorized Γ lookup; 0 below the lowest threshold."""
        idx = np.searchsorted(self.thresholds, np.asarray(snr_db), side="right") - 1
        table = np.concatenate([[0], self.bits])
        return table[idx + 1]


def parse_mcs_table(text: str) -> McsTable:
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise ValueError(f"bad MCS row: {line!r}")
        try:
            rows.append(McsEntry(float(parts[0]), int(parts[1]), int(parts[2])))
        except ValueError:
            if not rows:  # header line
                continue
            raise
    return McsTable(tuple(rows))


def load_mcs_table(path: str | Path | None = None) -> McsTable:
    if path is None:
        text = resources.files("laco").joinpath("data/mcs_table.csv").read_text()
    else:
        text = Path(path).read_text()
    return parse_mcs_table(text)


def lookup_mcs(snr_db: float, table: McsTable) -> tuple[int, int]:
    i = bisect.bisect_right(table._thresholds, snr_db) - 1
    e = table.entries[i] if i >= 0 else OUT_OF_RANGE
    return e.mcs_index, e.bits_per_prb


def arm_count(num_slices: int, num_chunks: int) -> int:
    return math.comb(num_chunks + num_slices - 1, num_slices - 1)


def enumerate_arms(num_slices: int, config: SystemConfig) -> ArmSet:
    """All Θ-granular splits of C over the slices, lexicographic in the allocation."""
    if num_slices < 1:
        raise ValueError("need at least one slice")
    if config.capacity_prbs % config.chunk_prbs:
        raise ValueError("chunk does not divide capacity")
    k, theta = config.num_chunks, config.chunk_prbs
    return ArmSet(_compositions(num_slices, k) * theta)


def _compositions(parts: int, total: int) -> np.ndarray:
    """Rows are the ordered splits of `total` into `parts` non-negative integers, lexicographic."""
    # table[t] holds the compositions of t into the current number of parts
    table = [np.array([[t]], dtype=np.int64) for t in range(total + 1)]
    for _ in range(parts - 1):
        table = [np.concatenate([np.column_stack([np.full(len(table[t - first]), first), table[t - first]])
                                 for first in range(t + 1)]) for t in range(total + 1)]
    return table[total]


def allocation_matrix(arms: Sequence[SlicingConfiguration]) -> np.ndarray:
    if isinstance(arms, ArmSet):
        return arms.matrix.copy()
    return np.array([a.allocation for a in arms], dtype=np.int64)
