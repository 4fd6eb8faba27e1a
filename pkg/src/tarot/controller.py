"""Per-segment FEC parameter selection.

Each segment the controller sees the telemetry s = (br, bl, pl, gp), prunes
candidates whose redundancy is below alpha(s) * pl, scores the rest with a
weighted sum of loss, overhead and blockization penalties, and returns the
argmin. ``score_candidate`` is the scalar reference for one candidate;
``select_config`` evaluates the whole library at once with numpy.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .fec import (
    CHARGE_SOURCE,
    CandidateLibrary,
    CodecFamily,
    FecConfig,
    encoding_latency,
    no_fec,
)
from .loss import residual_loss

H_CLAMP = 10.0
ALPHA_FLOOR = 0.5


@dataclass(frozen=True)
class TelemetryState:
    br: float  # playback bitrate, bit/s
    bl: float  # buffer level, s
    pl: float  # smoothed loss ratio
    gp: float  # measured goodput, bit/s

    def __post_init__(self):
        if not self.br > 0:
            raise ValueError(f"bitrate must be positive, got {self.br}")
        if self.bl < 0 or self.gp < 0:
            raise ValueError("buffer level and goodput must be non-negative")
        if not 0.0 <= self.pl <= 1.0:
            raise ValueError(f"loss must be in [0, 1], got {self.pl}")


@dataclass(frozen=True)
class Hyperparameters:
    # buffer management
    B_sat: float = 6.0
    B_crit: float = 3.0
    h_cap: float = 2.0
    # loss protection
    alpha_min: float = 1.0
    alpha_B: float = 0.5
    alpha_h: float = 0.5
    # overhead control
    o_0: float = 0.01
    k_B: float = 0.02
    k_h: float = 0.03
    o_cap: float = 0.35
    alpha_over: float = 1.5
    # blockization control
    eta: float = 0.5
    hardcap_tblk: float = 1.5
    # weight adaptation
    w_loss_min: float = 0.5
    lambda_p: float = 6.0
    p_cap: float = 0.15
    w_over_min: float = 0.5
    lambda_B: float = 0.5
    lambda_h: float = 0.4
    w_blk_min: float = 0.3
    lambda_risk: float = 0.6
    lambda_hneg: float = 0.6
    # not tabulated
    eps: float = 1e-9
    eps_pl: float = 1e-4
    ewma_lambda_vod: float = 0.25
    ewma_lambda_lll: float = 0.5
    encode_charge: str = CHARGE_SOURCE

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not v > 0:
                raise ValueError(f"hyperparameter {f.name} must be positive, got {v}")

    def ewma_lambda(self, mode: str) -> float:
        return self.ewma_lambda_lll if mode == "lll" else self.ewma_lambda_vod

    @classmethod
    def from_dict(cls, doc: dict) -> "Hyperparameters":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return replace(cls(), **{k: (v if k == "encode_charge" else float(v)) for k, v in doc.items()})

    @classmethod
    def from_json(cls, path) -> "Hyperparameters":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


class Headroom(NamedTuple):
    h: float
    pos: float
    neg: float


class Verdict(enum.Enum):
    INFEASIBLE = "infeasible"
    REJECTED = "rejected"


INFEASIBLE = Verdict.INFEASIBLE
REJECTED = Verdict.REJECTED


@dataclass(frozen=True)
class ScoredCandidate:
    cfg: FecConfig
    J: float
    components: tuple  # (P_loss, P_over, P_blk)
    weights: tuple  # (w_loss, w_over, w_blk), normalized


def smooth_loss(p_seg: float, p_prev: float, lam: float) -> float:
    return lam * p_seg + (1.0 - lam) * p_prev


class LossEstimator:
    """EWMA over per-segment loss; seeded by the first observation."""

    def __init__(self, lam: float):
        if not 0.0 < lam <= 1.0:
            raise ValueError("EWMA factor must be in (0, 1]")
        self.lam = lam
        self.value: float | None = None

    def update(self, p_seg: float) -> float:
        self.value = p_seg if self.value is None else smooth_loss(p_seg, self.value, self.lam)
        return self.value

    @property
    def estimate(self) -> float:
        return 0.0 if self.value is None else self.value


def effective_buffer(bl: float, hp: Hyperparameters) -> float:
    return min(max(bl, 0.0), hp.B_sat)


def headroom(rate: float, br: float, eps: float = 1e-9) -> Headroom:
    h = (rate - br) / max(br, eps)
    h = min(max(h, -H_CLAMP), H_CLAMP)
    return Headroom(h, max(0.0, h), max(0.0, -h))


def protection_margin(state: TelemetryState, hp: Hyperparameters) -> float:
    """Multiplier on pl giving the minimum redundancy ratio; uses pre-FEC headroom."""
    B_eff = effective_buffer(state.bl, hp)
    h = headroom(state.gp, state.br, hp.eps)
    alpha = (hp.alpha_min + hp.alpha_B * max(0.0, hp.B_crit - B_eff)
             - hp.alpha_h * min(h.pos, hp.h_cap))
    return max(ALPHA_FLOOR, alpha)


def fec_aware_headroom(state: TelemetryState, cfg: FecConfig,
                       hp: Hyperparameters | None = None) -> Headroom:
    eps = hp.eps if hp else 1e-9
    o = cfg.k / cfg.n
    cov = cfg.k / (cfg.n + cfg.k)
    l_eff = residual_loss(state.pl, cov)
    g_payload = state.gp * (1.0 - l_eff) / max((1.0 - state.pl) * (1.0 + o), eps)
    return headroom(g_payload, state.br, eps)


def overhead_allowance(B_eff: float, h_pos: float, hp: Hyperparameters) -> float:
    free = (hp.o_0 + hp.k_B * max(0.0, hp.B_crit - B_eff)
            + hp.k_h * min(h_pos, hp.h_cap))
    return max(0.0, min(free, hp.o_cap))


def loss_penalty(n: int, k: int, pl: float, beta: float) -> float:
    d = max(0.0, n * pl - beta * k)
    return d * d


def overhead_penalty(o: float, free: float, alpha_over: float) -> float:
    return math.pow(max(0.0, o - free), alpha_over)


def block_time(cfg: FecConfig, gp: float, hp: Hyperparameters) -> float:
    return (8.0 * (cfg.n + cfg.k) * cfg.S / max(gp, hp.eps)
            + encoding_latency(cfg, hp.encode_charge))


def block_penalty(cfg: FecConfig, gp: float, B_eff: float, hp: Hyperparameters):
    """P_blk in [0, 1], or REJECTED when the block cannot beat the hard cap."""
    t_blk = block_time(cfg, gp, hp)
    if t_blk > hp.hardcap_tblk * B_eff:
        return REJECTED
    return min(1.0, max(0.0, t_blk / (hp.eta * B_eff) - 1.0))


def adaptive_weights(pl: float, B_eff: float, h_pos: float, h_neg: float,
                     hp: Hyperparameters) -> tuple:
    w_loss = hp.w_loss_min + hp.lambda_p * min(pl, hp.p_cap)
    w_over = (hp.w_over_min + hp.lambda_B * (B_eff / hp.B_sat)
              + hp.lambda_h * min(h_pos, hp.h_cap))
    w_blk = (hp.w_blk_min + hp.lambda_risk * max(0.0, 1.0 - B_eff / hp.B_crit)
             + hp.lambda_hneg * h_neg)
    total = w_loss + w_over + w_blk
    return (w_loss / total, w_over / total, w_blk / total)


def score_candidate(cfg: FecConfig, state: TelemetryState, hp: Hyperparameters,
                    alpha: float | None = None):
    """Score one candidate: a ScoredCandidate, INFEASIBLE or REJECTED."""
    if alpha is None:
        alpha = protection_margin(state, hp)
    o = cfg.k / cfg.n
    if o < alpha * state.pl:
        return INFEASIBLE
    B_eff = effective_buffer(state.bl, hp)
    h = fec_aware_headroom(state, cfg, hp)
    free = overhead_allowance(B_eff, h.pos, hp)
    p_over = overhead_penalty(o, free, hp.alpha_over)
    p_blk = block_penalty(cfg, state.gp, B_eff, hp)
    if p_blk is REJECTED:
        return REJECTED
    p_loss = loss_penalty(cfg.n, cfg.k, state.pl, cfg.codec.beta)
    w = adaptive_weights(state.pl, B_eff, h.pos, h.neg, hp)
    J = w[0] * p_loss + w[1] * p_over + w[2] * p_blk
    return ScoredCandidate(cfg, J, (p_loss, p_over, p_blk), w)


@dataclass(frozen=True)
class Decision:
    cfg: FecConfig
    J: float
    kind: str  # "zero-loss" | "optimal" | "fallback"
    alpha: float
    feasible_count: int


class _Arrays:
    __slots__ = ("n", "k", "S", "T", "beta", "o", "cov", "cov_safe", "enc")

    def __init__(self, library: CandidateLibrary, hp: Hyperparameters):
        self.n = np.array([c.n for c in library], dtype=float)
        self.k = np.array([c.k for c in library], dtype=float)
        self.S = np.array([c.S for c in library], dtype=float)
        self.T = self.n + self.k
        self.beta = np.array([c.codec.beta for c in library], dtype=float)
        self.o = self.k / self.n
        self.cov = self.k / self.T
        self.cov_safe = np.where(self.cov > 0, self.cov, 1.0)
        self.enc = np.array([encoding_latency(c, hp.encode_charge) for c in library])


_ARRAY_CACHE: dict = {}


def _arrays(library: CandidateLibrary, hp: Hyperparameters) -> _Arrays:
    key = (id(library), hp.encode_charge)
    hit = _ARRAY_CACHE.get(key)
    if hit is None or hit[0] is not library:
        if len(_ARRAY_CACHE) > 64:
            _ARRAY_CACHE.clear()
        hit = (library, _Arrays(library, hp))
        _ARRAY_CACHE[key] = hit
    return hit[1]


def decide(state: TelemetryState, library: CandidateLibrary,
           hp: Hyperparameters = Hyperparameters()) -> Decision:
    """Select a configuration and report how it was reached."""
    if len(library) == 0:
        raise ValueError("candidate library is empty")
    alpha = protection_margin(state, hp)
    if state.pl < hp.eps_pl:
        return Decision(no_fec(library[0].codec), 0.0, "zero-loss", alpha, 0)

    a = _arrays(library, hp)
    pl, gp, br = state.pl, state.gp, state.br
    B_eff = effective_buffer(state.bl, hp)

    feasible = ~(a.o < alpha * pl)

    l_eff = np.where((pl <= a.cov) & (a.cov > 0),
                     pl * (0.4 + 0.6 * (1.0 - (a.cov - pl) / a.cov_safe)),
                     pl - 0.8 * a.cov)
    l_eff = np.maximum(0.0, np.minimum(l_eff, pl))
    g_payload = gp * (1.0 - l_eff) / np.maximum((1.0 - pl) * (1.0 + a.o), hp.eps)
    h = (g_payload - br) / max(br, hp.eps)
    h = np.minimum(np.maximum(h, -H_CLAMP), H_CLAMP)
    h_pos = np.maximum(0.0, h)
    h_neg = np.maximum(0.0, -h)
    h_pos_c = np.minimum(h_pos, hp.h_cap)

    free = hp.o_0 + hp.k_B * max(0.0, hp.B_crit - B_eff) + hp.k_h * h_pos_c
    free = np.maximum(0.0, np.minimum(free, hp.o_cap))
    p_over = np.power(np.maximum(0.0, a.o - free), hp.alpha_over)

    t_blk = 8.0 * a.T * a.S / max(gp, hp.eps) + a.enc
    passes_cap = ~(t_blk > hp.hardcap_tblk * B_eff)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p_blk = np.minimum(1.0, np.maximum(0.0, t_blk / (hp.eta * B_eff) - 1.0))

    d = np.maximum(0.0, a.n * pl - a.beta * a.k)
    p_loss = d * d

    w_loss = hp.w_loss_min + hp.lambda_p * min(pl, hp.p_cap)
    w_over = hp.w_over_min + hp.lambda_B * (B_eff / hp.B_sat) + hp.lambda_h * h_pos_c
    w_blk = hp.w_blk_min + hp.lambda_risk * max(0.0, 1.0 - B_eff / hp.B_crit) + hp.lambda_hneg * h_neg
    total = w_loss + w_over + w_blk
    J = (w_loss / total) * p_loss + (w_over / total) * p_over + (w_blk / total) * p_blk

    ok = feasible & passes_cap
    count = int(ok.sum())
    if count:
        J = np.where(ok, J, np.inf)
        i = int(np.argmin(J))
        return Decision(library[i], float(J[i]), "optimal", alpha, count)

    # nothing survived pruning: take the strongest protection we can still deliver
    pool = np.where(passes_cap, a.cov, -1.0) if passes_cap.any() else a.cov
    i = int(np.argmax(pool))
    return Decision(library[i], math.inf, "fallback", alpha, 0)


def select_config(state: TelemetryState, library: CandidateLibrary,
                  hp: Hyperparameters = Hyperparameters()) -> FecConfig:
    return decide(state, library, hp).cfg


def rfec_select(state: TelemetryState, fixed_n: int, fixed_S: int,
                codec: CodecFamily, hp: Hyperparameters = Hyperparameters()) -> FecConfig:
    """Redundancy-only baseline: (n, S) frozen, k just large enough to be feasible."""
    if state.pl < hp.eps_pl:
        return FecConfig(fixed_n, 0, fixed_S, codec)
    need = protection_margin(state, hp) * state.pl
    k = max(0, math.ceil(need * fixed_n))
    # settle float edges against the same comparison the pruner uses
    while k > 0 and (k - 1) / fixed_n >= need:
        k -= 1
    while k / fixed_n < need:
        k += 1
    return FecConfig(fixed_n, k, fixed_S, codec)
