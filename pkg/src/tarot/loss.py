"""Loss/goodput models and per-segment loss samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fec import FecConfig

DEFAULT_GAMMA = 0.5


def _check_ratio(L: float, what: str = "loss"):
    if not 0.0 <= L <= 1.0:
        raise ValueError(f"{what} must be a ratio in [0, 1], got {L}")


def goodput_under_loss(B_link: float, L: float, gamma: float = DEFAULT_GAMMA) -> float:
    """Transport goodput after loss-driven collapse.

    L is a ratio (1% -> 0.01). The collapse term grows as L**1.5, so the
    model tracks 1 - L at very low loss and falls off sharply past a few
    percent.
    """
    _check_ratio(L)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return B_link / (1.0 + gamma * L * 100.0 * math.sqrt(L))


def residual_loss(L: float, cov: float) -> float:
    """Loss left over after the code recovers what it can.

    Piecewise and deliberately discontinuous at L == cov.
    """
    if L <= cov and cov > 0:
        reduction = (cov - L) / cov
        l_eff = L * (0.4 + 0.6 * (1.0 - reduction))
    else:
        l_eff = L - 0.8 * cov
    return max(0.0, min(l_eff, L))


def fec_payload_goodput(B_link: float, L: float, cfg: FecConfig) -> float:
    """Payload goodput the ABR sees when ``cfg`` protects the stream."""
    _check_ratio(L)
    cov = cfg.k / (cfg.n + cfg.k)
    overhead_factor = (cfg.n + cfg.k) / cfg.n
    return B_link * (1.0 - residual_loss(L, cov)) / overhead_factor


@dataclass(frozen=True)
class LossProfile:
    kind: str = "none"  # none | const | var
    lo: float = 0.0
    hi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "const", "var"):
            raise ValueError(f"unknown loss profile kind {self.kind!r}")
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError(f"loss bounds must satisfy 0 <= lo <= hi <= 1, got {self.lo}, {self.hi}")

    @classmethod
    def none(cls, seed: int = 0) -> "LossProfile":
        return cls("none", 0.0, 0.0, seed)

    @classmethod
    def constant(cls, L: float, seed: int = 0) -> "LossProfile":
        return cls("const", L, L, seed)

    @classmethod
    def variable(cls, lo: float, hi: float, seed: int = 0) -> "LossProfile":
        return cls("var", lo, hi, seed)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "LossProfile":
        """Parse ``none``, ``const:<L>`` or ``var:<lo>:<hi>``."""
        parts = text.strip().lower().split(":")
        try:
            if parts == ["none"]:
                return cls.none(seed)
            if parts[0] == "const" and len(parts) == 2:
                return cls.constant(float(parts[1]), seed)
            if parts[0] == "var" and len(parts) == 3:
                return cls.variable(float(parts[1]), float(parts[2]), seed)
        except ValueError as e:
            raise ValueError(f"bad loss profile {text!r}: {e}") from None
        raise ValueError(f"bad loss profile {text!r}")

    def label(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "const":
            return f"const:{self.lo:g}"
        return f"var:{self.lo:g}:{self.hi:g}"

    def with_seed(self, seed: int) -> "LossProfile":
        return LossProfile(self.kind, self.lo, self.hi, seed)


def sample_loss(profile: LossProfile, segment_index: int) -> float:
    if profile.kind == "none":
        return 0.0
    if profile.kind == "const":
        return profile.lo
    # keyed on (seed, index): no hidden stream state, any order gives the same draws
    rng = np.random.default_rng([profile.seed & 0xFFFFFFFFFFFFFFFF, segment_index])
    return float(rng.uniform(profile.lo, profile.hi))
