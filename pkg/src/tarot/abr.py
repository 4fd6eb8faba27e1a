"""Bitrate selection: a throughput rule and a buffer/throughput hybrid."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class BitrateLadder:
    bitrates: tuple  # bit/s, strictly increasing
    quality: tuple  # quality index per representation

    def __post_init__(self):
        if not self.bitrates:
            raise ValueError("ladder needs at least one representation")
        if len(self.quality) != len(self.bitrates):
            raise ValueError("one quality value per representation")
        if any(b <= 0 for b in self.bitrates):
            raise ValueError("bitrates must be positive")
        if any(a >= b for a, b in zip(self.bitrates, self.bitrates[1:])):
            raise ValueError("bitrates must be strictly increasing")
        if any(a > b for a, b in zip(self.quality, self.quality[1:])):
            raise ValueError("quality must not decrease with bitrate")

    @classmethod
    def from_bitrates(cls, bitrates: Sequence[float], quality: Sequence[float] | None = None):
        bitrates = tuple(float(b) for b in bitrates)
        if quality is None:
            quality = log_quality(bitrates)
        return cls(bitrates, tuple(float(q) for q in quality))

    def __len__(self):
        return len(self.bitrates)


def log_quality(bitrates: Sequence[float]) -> tuple:
    """ln(b / b_min) rescaled to [0, 100]."""
    if not bitrates:
        return ()
    lo, hi = bitrates[0], bitrates[-1]
    if hi == lo:
        return (100.0,) * len(bitrates)
    span = math.log(hi / lo)
    return tuple(100.0 * math.log(b / lo) / span for b in bitrates)


class ThroughputHistory:
    """Sliding window of (bytes, seconds) download samples."""

    def __init__(self, window: int = 3, startup_estimate: float = 1e6):
        if window < 1:
            raise ValueError("window must be at least 1")
        self.window = window
        self.startup_estimate = startup_estimate
        self.samples: deque = deque(maxlen=window)

    def push(self, nbytes: float, seconds: float):
        self.samples.append((nbytes, seconds))

    def __len__(self):
        return len(self.samples)


def estimate_throughput(history: ThroughputHistory) -> float:
    """Harmonic mean of per-sample rates, in bit/s."""
    if not history.samples:
        return history.startup_estimate
    # harmonic mean of rates == count / sum of seconds-per-bit
    inv = 0.0
    for nbytes, seconds in history.samples:
        if nbytes <= 0:
            continue
        inv += seconds / (8.0 * nbytes)
    if inv == 0.0:
        return math.inf
    return len(history.samples) / inv


def throughput_abr_decide(estimate: float, ladder: BitrateLadder, safety: float = 0.9) -> int:
    budget = safety * estimate
    choice = 0
    for i, b in enumerate(ladder.bitrates):
        if b <= budget:
            choice = i
    return choice


@dataclass(frozen=True)
class DynamicParams:
    buffer_capacity: float  # s
    segment_duration: float  # s
    switch_threshold: float = 10.0
    gp: float = 5.0  # BOLA utility offset
    safety: float = 0.9


def bola_control(ladder: BitrateLadder, params: DynamicParams) -> tuple[float, tuple]:
    """BOLA's V and per-representation utilities for a given buffer size."""
    utilities = tuple(math.log(b / ladder.bitrates[0]) for b in ladder.bitrates)
    V = (params.buffer_capacity - params.segment_duration) / (utilities[-1] + params.gp)
    return V, utilities


def dynamic_abr_decide(buffer_level: float, estimate: float, ladder: BitrateLadder,
                       params: DynamicParams) -> int:
    if buffer_level < 0:
        raise ValueError("buffer level must be non-negative")
    if buffer_level < params.switch_threshold:
        return throughput_abr_decide(estimate, ladder, params.safety)
    V, utilities = bola_control(ladder, params)
    best, best_score = 0, -math.inf
    for i, (u, b) in enumerate(zip(utilities, ladder.bitrates)):
        score = (V * (u + params.gp) - buffer_level) / b
        if score > best_score:
            best, best_score = i, score
    return best
