"""Synthetic inputs for desk-scale experiments.

Four trace archetypes are drawn to match the mean/standard deviation of the
cellular traces used for evaluation; the manifest mimics a ten-rung 4K ladder
from 0.5 to 40 Mbit/s over a 4 min 30 s title.
"""

from __future__ import annotations

import numpy as np

from .abr import BitrateLadder
from .simulator import MODES, Manifest, NetworkTrace

LADDER_KBPS = (500, 1000, 2000, 3000, 5000, 8000, 12000, 16000, 25000, 40000)
TITLE_SECONDS = 270.0

# name -> (mean Mbit/s, std Mbit/s, latency ms)
ARCHETYPES = {
    "netflix5g": (33.0, 18.0, 20.0),
    "amazon5g": (25.0, 10.0, 20.0),
    "lte_belgium": (20.0, 5.0, 40.0),
    "cascade": (30.0, 15.0, 30.0),
}
_SEEDS = {"netflix5g": 11, "amazon5g": 12, "lte_belgium": 13, "cascade": 14}
FLOOR_MBPS = 0.3


def make_manifest(mode: str = "vod", seed: int = 0, ladder_kbps=LADDER_KBPS,
                  title_seconds: float = TITLE_SECONDS, vbr: float = 0.1) -> Manifest:
    """Per-segment sizes with a shared scene-complexity factor across rungs."""
    seg = MODES[mode][1]
    count = int(round(title_seconds / seg))
    rng = np.random.default_rng(seed)
    scene = np.exp(rng.normal(0.0, vbr, count))
    scene /= scene.mean()
    sizes = tuple(
        tuple(max(1, int(round(kbps * 1e3 * seg * f / 8))) for f in scene)
        for kbps in ladder_kbps
    )
    return Manifest(seg, BitrateLadder.from_bitrates([k * 1e3 for k in ladder_kbps]), sizes)


def _match_moments(x: np.ndarray, mean: float, std: float) -> np.ndarray:
    x = mean + std * (x - x.mean()) / x.std()
    return np.maximum(x, FLOOR_MBPS)


def make_trace(name: str, seconds: float = 600.0, period: float = 1.0,
               seed: int | None = None) -> NetworkTrace:
    mean, std, lat_ms = ARCHETYPES[name]
    rng = np.random.default_rng(_SEEDS[name] if seed is None else seed)
    count = int(seconds / period)
    if name == "cascade":
        # 5G <-> 4G handovers: two regimes with geometric dwell times
        level = np.empty(count)
        lat = np.empty(count)
        state, i = 1, 0
        while i < count:
            dwell = int(rng.geometric(1 / 20))
            level[i:i + dwell] = 42.0 if state else 15.0
            lat[i:i + dwell] = 20.0 if state else 40.0
            state ^= 1
            i += dwell
        x = level + rng.normal(0.0, 4.0, count)
        latencies = lat / 1e3
    else:
        shape = (mean / std) ** 2
        # blend with the previous draw for some temporal correlation
        x = rng.gamma(shape, mean / shape, count)
        x = 0.6 * np.concatenate([[x[0]], x[:-1]]) + 0.4 * x
        latencies = np.full(count, lat_ms / 1e3)
    mbps = _match_moments(x, mean, std)
    return NetworkTrace(
        tuple([period] * count),
        tuple(float(v) * 1e6 for v in mbps),
        tuple(float(v) for v in latencies),
    )


def constant_trace(mbps: float, latency_ms: float = 20.0) -> NetworkTrace:
    return NetworkTrace.constant(mbps * 1e6, latency_ms / 1e3)


def all_traces() -> dict:
    return {name: make_trace(name) for name in ARCHETYPES}
