"""Per-segment streaming session engine with loss and FEC.

Time is integrated exactly over the trace's constant-bandwidth periods; the
session clock and the trace clock are the same clock, starting at zero.
"""

from __future__ import annotations

import bisect
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

from .abr import (
    BitrateLadder,
    DynamicParams,
    ThroughputHistory,
    dynamic_abr_decide,
    estimate_throughput,
    throughput_abr_decide,
)
from .controller import (
    Hyperparameters,
    LossEstimator,
    TelemetryState,
    decide,
    rfec_select,
)
from .fec import (
    REED_SOLOMON,
    RAPTORQ,
    XOR,
    CandidateLibrary,
    FecConfig,
    GridSpec,
    build_candidate_library,
    codec_by_name,
    default_grid,
    no_fec,
    segment_encoding_latency,
)
from .loss import (
    DEFAULT_GAMMA,
    LossProfile,
    fec_payload_goodput,
    goodput_under_loss,
    residual_loss,
    sample_loss,
)


class FormatError(ValueError):
    """Malformed manifest or trace document."""


# --- traces ---------------------------------------------------------------

@dataclass(frozen=True)
class NetworkTrace:
    durations: tuple  # s
    bandwidths: tuple  # bit/s
    latencies: tuple  # s

    def __post_init__(self):
        if not self.durations:
            raise ValueError("trace has no periods")
        if not len(self.durations) == len(self.bandwidths) == len(self.latencies):
            raise ValueError("trace columns differ in length")
        if any(d <= 0 for d in self.durations):
            raise ValueError("period durations must be positive")
        if any(b < 0 for b in self.bandwidths) or any(x < 0 for x in self.latencies):
            raise ValueError("bandwidth and latency must be non-negative")
        if not any(b > 0 for b in self.bandwidths):
            raise ValueError("trace never carries any data")
        starts = [0.0]
        for d in self.durations[:-1]:
            starts.append(starts[-1] + d)
        object.__setattr__(self, "_starts", tuple(starts))
        object.__setattr__(self, "total", starts[-1] + self.durations[-1])
        object.__setattr__(self, "loop_bits",
                           math.fsum(d * b for d, b in zip(self.durations, self.bandwidths)))

    @classmethod
    def constant(cls, bandwidth: float, latency: float = 0.0, duration: float = 1.0):
        return cls((duration,), (float(bandwidth),), (latency,))

    @classmethod
    def from_periods(cls, periods):
        d, b, l = zip(*periods)
        return cls(tuple(map(float, d)), tuple(map(float, b)), tuple(map(float, l)))

    def locate(self, t: float) -> tuple[int, float]:
        """(period index, offset into it) for absolute time t, looping."""
        pos = math.fmod(t, self.total)
        i = bisect.bisect_right(self._starts, pos) - 1
        return i, pos - self._starts[i]

    def latency_at(self, t: float) -> float:
        return self.latencies[self.locate(t)[0]]

    def mean_bandwidth(self) -> float:
        return self.loop_bits / self.total

    def to_json(self) -> list:
        return [
            {"duration_ms": d * 1e3, "bandwidth_kbps": b / 1e3, "latency_ms": x * 1e3}
            for d, b, x in zip(self.durations, self.bandwidths, self.latencies)
        ]


def _num(doc, key, where):
    try:
        v = doc[key]
    except (KeyError, TypeError):
        raise FormatError(f"{where}: missing {key!r}") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise FormatError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def parse_trace(doc) -> NetworkTrace:
    if not isinstance(doc, list) or not doc:
        raise FormatError("trace: expected a non-empty list of periods")
    periods = []
    for i, p in enumerate(doc):
        where = f"trace[{i}]"
        d = _num(p, "duration_ms", where)
        b = _num(p, "bandwidth_kbps", where)
        x = _num(p, "latency_ms", where)
        if d <= 0:
            raise FormatError(f"{where}.duration_ms: must be positive")
        if b < 0 or x < 0:
            raise FormatError(f"{where}: bandwidth and latency must be non-negative")
        periods.append((d / 1e3, b * 1e3, x / 1e3))
    try:
        return NetworkTrace.from_periods(periods)
    except ValueError as e:
        raise FormatError(f"trace: {e}") from None


def load_trace(path) -> NetworkTrace:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None
    return parse_trace(doc)


# --- manifests ------------------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    segment_duration: float  # s
    ladder: BitrateLadder
    sizes: tuple  # sizes[rep][segment], bytes

    def __post_init__(self):
        if self.segment_duration <= 0:
            raise ValueError("segment duration must be positive")
        if len(self.sizes) != len(self.ladder):
            raise ValueError("one size column per representation")
        counts = {len(col) for col in self.sizes}
        if len(counts) != 1 or 0 in counts:
            raise ValueError("every representation needs the same, non-zero segment count")
        if any(s <= 0 for col in self.sizes for s in col):
            raise ValueError("segment sizes must be positive")

    @property
    def num_segments(self) -> int:
        return len(self.sizes[0])

    def to_json(self) -> dict:
        return {
            "segment_duration_ms": self.segment_duration * 1e3,
            "bitrates_kbps": [b / 1e3 for b in self.ladder.bitrates],
            "quality": list(self.ladder.quality),
            "segment_sizes_bits": [
                [self.sizes[q][i] * 8 for q in range(len(self.ladder))]
                for i in range(self.num_segments)
            ],
        }


def parse_manifest(doc) -> Manifest:
    if not isinstance(doc, dict):
        raise FormatError("manifest: expected an object")
    seg = _num(doc, "segment_duration_ms", "manifest")
    if seg <= 0:
        raise FormatError("manifest.segment_duration_ms: must be positive")
    rates = doc.get("bitrates_kbps")
    if not isinstance(rates, list) or not rates:
        raise FormatError("manifest.bitrates_kbps: expected a non-empty list")
    for i, r in enumerate(rates):
        if isinstance(r, bool) or not isinstance(r, (int, float)) or r <= 0:
            raise FormatError(f"manifest.bitrates_kbps[{i}]: expected a positive number")
    for i in range(1, len(rates)):
        if rates[i] <= rates[i - 1]:
            raise FormatError(f"manifest.bitrates_kbps[{i}]: ladder must be strictly increasing")
    quality = doc.get("quality")
    if quality is not None and (not isinstance(quality, list) or len(quality) != len(rates)):
        raise FormatError("manifest.quality: expected one value per bitrate")
    segs = doc.get("segment_sizes_bits")
    if not isinstance(segs, list) or not segs:
        raise FormatError("manifest.segment_sizes_bits: expected a non-empty list")
    cols = [[] for _ in rates]
    for i, row in enumerate(segs):
        where = f"manifest.segment_sizes_bits[{i}]"
        if not isinstance(row, list) or len(row) != len(rates):
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise FormatError(f"{where}: expected {len(rates)} sizes, got {got}")
        for q, bits in enumerate(row):
            if isinstance(bits, bool) or not isinstance(bits, (int, float)) or bits <= 0:
                raise FormatError(f"{where}[{q}]: expected a positive size")
            cols[q].append(int(math.ceil(bits / 8)))
    try:
        ladder = BitrateLadder.from_bitrates([r * 1e3 for r in rates], quality)
    except ValueError as e:
        raise FormatError(f"manifest.quality: {e}") from None
    return Manifest(seg / 1e3, ladder, tuple(tuple(c) for c in cols))


def load_manifest(path) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None
    return parse_manifest(doc)


# --- downloads ------------------------------------------------------------

class Download(NamedTuple):
    seconds: float  # latency + encoding + transfer
    cursor: float
    latency: float
    encoding: float
    transfer: float
    residual_loss: float


def payload_rate_factor(cfg: FecConfig, L: float, gamma: float = DEFAULT_GAMMA,
                        compose: bool = False) -> float:
    """Payload bit/s delivered per bit/s of link bandwidth."""
    if cfg.k == 0:
        return goodput_under_loss(1.0, L, gamma)
    if compose:
        cov = cfg.k / (cfg.n + cfg.k)
        return fec_payload_goodput(goodput_under_loss(1.0, residual_loss(L, cov), gamma), L, cfg)
    return fec_payload_goodput(1.0, L, cfg)


def transfer_time(trace: NetworkTrace, start: float, link_bits: float) -> float:
    """Seconds from ``start`` until ``link_bits`` of raw bandwidth have elapsed."""
    if link_bits <= 0:
        return 0.0
    elapsed = 0.0
    loops = math.floor(link_bits / trace.loop_bits)
    if loops > 1:
        # whole passes over the trace land back on the same offset
        elapsed += (loops - 1) * trace.total
        link_bits -= (loops - 1) * trace.loop_bits
    i, offset = trace.locate(start)
    while True:
        bw = trace.bandwidths[i]
        span = trace.durations[i] - offset
        if bw > 0 and bw * span >= link_bits:
            return elapsed + link_bits / bw
        link_bits -= bw * span
        elapsed += span
        i = (i + 1) % len(trace.durations)
        offset = 0.0


def download_segment(source_bytes: int, cfg: FecConfig, trace: NetworkTrace, cursor: float,
                     L: float, gamma: float = DEFAULT_GAMMA, latency: float | None = None,
                     compose: bool = False, charge: str = "source") -> Download:
    if source_bytes <= 0:
        raise ValueError("segment must carry a payload")
    if latency is None:
        latency = trace.latency_at(cursor)
    enc = segment_encoding_latency(source_bytes, cfg, charge)
    factor = payload_rate_factor(cfg, L, gamma, compose)
    xfer = transfer_time(trace, cursor + latency + enc, 8.0 * source_bytes / factor)
    total = latency + enc + xfer
    l_eff = L if cfg.k == 0 else residual_loss(L, cfg.k / (cfg.n + cfg.k))
    return Download(total, cursor + total, latency, enc, xfer, l_eff)


# --- sessions -------------------------------------------------------------

STRATEGIES = ("none", "rs", "rq", "xor", "rs-tarot", "rq-tarot", "rfec")
MODES = {"vod": (60.0, 4.0), "lll": (6.0, 2.0)}

STATIC_DEFAULT = (20, 10, 64)
XOR_DEFAULT = (2, 1, 64)


@dataclass(frozen=True)
class SessionConfig:
    mode: str = "vod"
    abr: str = "throughput"
    fec: str = "none"
    loss: LossProfile = field(default_factory=LossProfile)
    gamma: float = DEFAULT_GAMMA
    seed: int = 0
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    buffer_cap: float | None = None  # None: 60 s VoD, 6 s LLL
    segment_duration: float | None = None  # None: take the manifest's
    startup_segments: int = 1
    safety: float = 0.9
    window: int = 3
    startup_estimate: float = 1e6
    switch_threshold: float = 10.0
    bola_gp: float = 5.0
    static: tuple = STATIC_DEFAULT
    rfec_n: int = 20
    rfec_S: int = 64
    rfec_codec: str = "RaptorQ"
    grid: dict | None = None  # candidate grid override {n, r, S}
    compose_loss: bool = False
    measure_latency: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.abr not in ("throughput", "dynamic"):
            raise ValueError(f"unknown ABR {self.abr!r}")
        if self.fec not in STRATEGIES:
            raise ValueError(f"unknown FEC strategy {self.fec!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.startup_segments < 1:
            raise ValueError("startup needs at least one segment")

    @property
    def cap(self) -> float:
        return self.buffer_cap if self.buffer_cap is not None else MODES[self.mode][0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.label()
        d["loss_seed"] = self.loss.seed
        d["buffer_cap"] = self.cap
        return d


@dataclass
class SegmentRecord:
    index: int
    representation: int
    bitrate: float
    quality: float
    fec: str
    n: int
    k: int
    S: int
    source_bytes: int
    repair_bytes: float
    download_s: float
    latency_s: float
    encoding_s: float
    transfer_s: float
    buffer_before: float
    buffer_after: float
    rebuffer_s: float
    idle_s: float
    loss: float
    smoothed_loss: float
    residual_loss: float
    decision: str
    decision_us: float


@dataclass
class SessionReport:
    config: dict
    records: list
    wall_time: float
    startup_delay: float
    play_time: float
    rebuffer_time: float
    idle_time: float
    content_duration: float

    TIMING_FIELDS = ("decision_us",)

    def to_dict(self, timing: bool = True, per_segment: bool = True) -> dict:
        recs = []
        if per_segment:
            for r in self.records:
                d = asdict(r)
                if not timing:
                    for f in self.TIMING_FIELDS:
                        d.pop(f)
                recs.append(d)
        out = {k: v for k, v in asdict(self).items() if k != "records"}
        out["records"] = recs
        return out

    def to_json(self, timing: bool = True, per_segment: bool = True) -> str:
        return json.dumps(self.to_dict(timing, per_segment), sort_keys=True)


def make_library(codec_name: str, grid: dict | None = None) -> CandidateLibrary:
    codec = codec_by_name(codec_name)
    spec = GridSpec.from_dict(grid, codec) if grid else default_grid(codec)
    return _cached_library(spec)


_LIBS: dict = {}


def _cached_library(spec: GridSpec) -> CandidateLibrary:
    lib = _LIBS.get(spec)
    if lib is None:
        lib = _LIBS[spec] = build_candidate_library(spec)
    return lib


def make_strategy(cfg: SessionConfig) -> Callable[[TelemetryState], tuple]:
    """Return a callable mapping telemetry to (FecConfig, decision label)."""
    hp = cfg.hp
    n, k, S = cfg.static
    if cfg.fec == "none":
        fixed = no_fec()
        return lambda s: (fixed, "none")
    if cfg.fec in ("rs", "rq"):
        fixed = FecConfig(n, k, S, REED_SOLOMON if cfg.fec == "rs" else RAPTORQ)
        return lambda s: (fixed, "static")
    if cfg.fec == "xor":
        fixed = FecConfig(*XOR_DEFAULT, XOR)
        return lambda s: (fixed, "static")
    if cfg.fec == "rfec":
        codec = codec_by_name(cfg.rfec_codec)
        return lambda s: (rfec_select(s, cfg.rfec_n, cfg.rfec_S, codec, hp), "rfec")
    library = make_library("rs" if cfg.fec == "rs-tarot" else "rq", cfg.grid)

    def tarot(s):
        d = decide(s, library, hp)
        return d.cfg, d.kind
    return tarot


def run_session(manifest: Manifest, trace: NetworkTrace, cfg: SessionConfig) -> SessionReport:
    seg_dur = cfg.segment_duration or manifest.segment_duration
    cap = cfg.cap
    if not cap > seg_dur:
        raise ValueError(f"buffer cap {cap} s must exceed the segment duration {seg_dur} s")
    if cfg.startup_segments * seg_dur > cap:
        raise ValueError("startup threshold does not fit in the buffer")
    ladder = manifest.ladder
    hp = cfg.hp
    strategy = make_strategy(cfg)
    loss = cfg.loss
    dyn = DynamicParams(cap, seg_dur, cfg.switch_threshold, cfg.bola_gp, cfg.safety)

    history = ThroughputHistory(cfg.window, cfg.startup_estimate)
    wire = ThroughputHistory(cfg.window, cfg.startup_estimate)
    estimator = LossEstimator(hp.ewma_lambda(cfg.mode))

    t = 0.0
    buffer = 0.0
    started = False
    startup = play = rebuffer = idle = 0.0
    records = []
    for i in range(manifest.num_segments):
        wait = 0.0
        if started:
            wait = max(0.0, buffer - (cap - seg_dur))
            buffer -= wait
            idle += wait
            t += wait
        bl = buffer

        est = estimate_throughput(history)
        if cfg.abr == "dynamic":
            q = dynamic_abr_decide(bl, est, ladder, dyn)
        else:
            q = throughput_abr_decide(est, ladder, cfg.safety)
        br = ladder.bitrates[q]
        size = manifest.sizes[q][i]

        # the segment's loss sample feeds the EWMA before the FEC decision
        L = sample_loss(loss, i)
        pl = estimator.update(L)
        state = TelemetryState(br, bl, pl, estimate_throughput(wire))
        t0 = time.perf_counter_ns()
        fec, label = strategy(state)
        dec_us = (time.perf_counter_ns() - t0) / 1e3 if cfg.measure_latency else 0.0
        if label in ("none", "static"):
            dec_us = 0.0

        dl = download_segment(size, fec, trace, t, L, cfg.gamma,
                              compose=cfg.compose_loss, charge=hp.encode_charge)
        stall = 0.0
        if started:
            drain = min(buffer, dl.seconds)
            play += drain
            buffer -= drain
            stall = dl.seconds - drain
            rebuffer += stall
        else:
            startup += dl.seconds
        t += dl.seconds
        buffer += seg_dur
        if not started and i + 1 >= cfg.startup_segments:
            started = True

        repair = size * fec.k / fec.n
        history.push(size, dl.seconds)
        wire.push(size + repair, dl.transfer)

        records.append(SegmentRecord(
            index=i, representation=q, bitrate=br, quality=ladder.quality[q],
            fec="none" if fec.k == 0 else fec.codec.name, n=fec.n, k=fec.k, S=fec.S,
            source_bytes=size, repair_bytes=repair,
            download_s=dl.seconds, latency_s=dl.latency, encoding_s=dl.encoding,
            transfer_s=dl.transfer, buffer_before=bl, buffer_after=buffer,
            rebuffer_s=stall, idle_s=wait, loss=L, smoothed_loss=pl,
            residual_loss=dl.residual_loss, decision=label, decision_us=dec_us,
        ))

    # drain whatever is left; also covers sessions shorter than the startup threshold
    play += buffer
    t += buffer
    return SessionReport(
        config=cfg.to_dict(), records=records, wall_time=t, startup_delay=startup,
        play_time=play, rebuffer_time=rebuffer, idle_time=idle,
        content_duration=manifest.num_segments * seg_dur,
    )
