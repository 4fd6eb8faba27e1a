"""Code-family-agnostic FEC arithmetic.

Nothing here touches payload bytes. A configuration is the tuple
(n, k, S, codec): n source symbols of S bytes protected by k repair symbols.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence


@dataclass(frozen=True)
class CodecFamily:
    """An erasure-code family as seen by the controller and the simulator.

    ``beta`` is the recovery efficiency (1.0 for MDS codes) and the encoding
    cost is ``ns_per_byte`` per charged byte plus ``fixed_seconds`` per block.
    """

    name: str
    beta: float
    ns_per_byte: float
    fixed_seconds: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"codec efficiency must be in (0, 1], got {self.beta}")
        if self.ns_per_byte < 0 or self.fixed_seconds < 0:
            raise ValueError("encoding cost must be non-negative")


REED_SOLOMON = CodecFamily("ReedSolomon", beta=1.0, ns_per_byte=35.0)
RAPTORQ = CodecFamily("RaptorQ", beta=0.99, ns_per_byte=22.0)
XOR = CodecFamily("Xor", beta=0.8, ns_per_byte=0.0, fixed_seconds=1e-9)

CODECS = {c.name: c for c in (REED_SOLOMON, RAPTORQ, XOR)}
_ALIASES = {"rs": REED_SOLOMON, "rq": RAPTORQ, "xor": XOR}


def codec_by_name(name: str) -> CodecFamily:
    try:
        return CODECS.get(name) or _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown codec {name!r}") from None


@dataclass(frozen=True)
class FecConfig:
    n: int
    k: int
    S: int
    codec: CodecFamily = RAPTORQ

    def __post_init__(self):
        if self.n < 1 or self.S < 1 or self.k < 0:
            raise ValueError(f"invalid FEC config n={self.n} k={self.k} S={self.S}")

    @property
    def key(self) -> tuple:
        return (self.n, self.k, self.S, self.codec.name)

    @property
    def is_none(self) -> bool:
        return self.k == 0

    def __str__(self):
        return f"{self.codec.name}(n={self.n},k={self.k},S={self.S})"


def no_fec(codec: CodecFamily = RAPTORQ) -> FecConfig:
    """The k = 0 sentinel."""
    return FecConfig(1, 0, 1, codec)


def _exact(r) -> Fraction:
    # floats go through repr so 0.075 means 3/40, not its binary neighbour
    if isinstance(r, float):
        return Fraction(repr(r))
    return Fraction(r)


def symbolize(payload_bytes: int, S: int) -> int:
    if payload_bytes <= 0 or S <= 0:
        raise ValueError("payload and symbol size must be positive")
    return -(-payload_bytes // S)


def repair_count(n: int, r) -> int:
    r = _exact(r)
    if n < 1:
        raise ValueError("n must be at least 1")
    if r < 0:
        raise ValueError("redundancy must be non-negative")
    return math.ceil(r * n)


def overhead(cfg: FecConfig) -> Fraction:
    return Fraction(cfg.k, cfg.n)


def coverage(cfg: FecConfig) -> Fraction:
    return Fraction(cfg.k, cfg.n + cfg.k)


def decode_feasible(n_recv: int, k_recv: int, n: int) -> bool:
    if n_recv < 0 or k_recv < 0:
        raise ValueError("received counts must be non-negative")
    if n_recv > n:
        raise ValueError(f"received {n_recv} source symbols out of {n}")
    return n_recv + k_recv >= n


# Bytes charged to the encoder: the source block only, or everything sent.
CHARGE_SOURCE = "source"
CHARGE_TRANSMITTED = "transmitted"


def encoding_latency(cfg: FecConfig, charge: str = CHARGE_SOURCE) -> float:
    """Seconds to encode one block of ``cfg``."""
    if cfg.k == 0:
        return 0.0
    if charge == CHARGE_SOURCE:
        nbytes = cfg.n * cfg.S
    elif charge == CHARGE_TRANSMITTED:
        nbytes = (cfg.n + cfg.k) * cfg.S
    else:
        raise ValueError(f"unknown charge mode {charge!r}")
    return cfg.codec.fixed_seconds + nbytes * cfg.codec.ns_per_byte * 1e-9


def segment_blocks(source_bytes: int, cfg: FecConfig) -> int:
    return -(-source_bytes // (cfg.n * cfg.S))


def segment_encoding_latency(source_bytes: int, cfg: FecConfig,
                             charge: str = CHARGE_SOURCE) -> float:
    """Encoding time for a whole segment split into blocks of n*S bytes."""
    if cfg.k == 0:
        return 0.0
    return segment_blocks(source_bytes, cfg) * encoding_latency(cfg, charge)


@dataclass(frozen=True)
class GridSpec:
    n_values: tuple
    r_values: tuple
    S_values: tuple
    codec: CodecFamily = RAPTORQ

    @classmethod
    def from_dict(cls, doc: dict, codec: CodecFamily | None = None) -> "GridSpec":
        try:
            c = codec or codec_by_name(doc.get("codec", "RaptorQ"))
            return cls(tuple(doc["n"]), tuple(doc["r"]), tuple(doc["S"]), c)
        except KeyError as e:
            raise ValueError(f"candidate grid is missing {e.args[0]!r}") from None

    @classmethod
    def from_json(cls, path, codec: CodecFamily | None = None) -> "GridSpec":
        return cls.from_dict(json.loads(Path(path).read_text()), codec)


DEFAULT_N = (4, 8, 10, 16, 20, 32, 40, 50, 64, 100)
DEFAULT_R = (0.01, 0.02, 0.05, 0.075, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5)
DEFAULT_S = (64, 128, 256, 512)


def default_grid(codec: CodecFamily = RAPTORQ) -> GridSpec:
    return GridSpec(DEFAULT_N, DEFAULT_R, DEFAULT_S, codec)


def wide_grid(codec: CodecFamily = RAPTORQ) -> GridSpec:
    # the default axes collapse to 280 after ceil de-duplication; one more n and
    # one more S bring the library to exactly 400 entries
    return GridSpec(DEFAULT_N + (200,), DEFAULT_R, (32,) + DEFAULT_S, codec)


class CandidateLibrary(Sequence):
    """Immutable, de-duplicated, canonically ordered set of configurations."""

    def __init__(self, candidates: Iterable[FecConfig], grid: GridSpec | None = None):
        unique = {c.key: c for c in candidates}
        self._items = tuple(sorted(unique.values(), key=lambda c: c.key))
        self.grid = grid

    @classmethod
    def from_grid(cls, grid: GridSpec) -> "CandidateLibrary":
        return build_candidate_library(grid)

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)

    def __iter__(self) -> Iterator[FecConfig]:
        return iter(self._items)

    def __eq__(self, other):
        return isinstance(other, CandidateLibrary) and self._items == other._items

    def __hash__(self):
        return hash(self._items)

    def __repr__(self):
        return f"CandidateLibrary({len(self)} candidates)"


def build_candidate_library(grid: GridSpec) -> CandidateLibrary:
    if not (grid.n_values and grid.r_values and grid.S_values):
        raise ValueError("candidate grid has an empty axis")
    cands = (
        FecConfig(n, repair_count(n, r), S, grid.codec)
        for n, r, S in itertools.product(grid.n_values, grid.r_values, grid.S_values)
    )
    return CandidateLibrary(cands, grid)
