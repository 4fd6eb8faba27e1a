"""Session metrics, sweeps over experiment grids, and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .controller import Hyperparameters
from .loss import LossProfile
from .simulator import (
    Manifest,
    NetworkTrace,
    SessionConfig,
    SessionReport,
    load_manifest,
    load_trace,
    run_session,
)

SCHEMA_VERSION = 1
COLUMNS = ("mode", "loss", "strategy", "abr", "quality", "rebuffer_s", "rebuffer_pct",
           "overhead_pct", "avg_bitrate_bps", "decision_us_mean", "decision_us_p99")
LABELS = COLUMNS[:4]
TIMING_COLUMNS = ("decision_us_mean", "decision_us_p99")
SIG_DIGITS = 6


@dataclass(frozen=True)
class MetricsSummary:
    mode: str
    loss: str
    strategy: str
    abr: str
    quality: float  # mean quality index, not VMAF
    rebuffer_s: float
    rebuffer_pct: float
    overhead_pct: float
    avg_bitrate_bps: float
    decision_us_mean: float
    decision_us_p99: float

    def row(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            for c in TIMING_COLUMNS:
                d.pop(c)
        return d


def summarize(report: SessionReport) -> MetricsSummary:
    recs = report.records
    cfg = report.config
    source = math.fsum(r.source_bytes for r in recs)
    repair = math.fsum(r.repair_bytes for r in recs)
    timed = [r.decision_us for r in recs if r.decision not in ("none", "static")]
    return MetricsSummary(
        mode=cfg["mode"],
        loss=cfg["loss"],
        strategy=cfg["fec"],
        abr=cfg["abr"],
        quality=math.fsum(r.quality for r in recs) / len(recs),
        rebuffer_s=report.rebuffer_time,
        rebuffer_pct=100.0 * report.rebuffer_time / report.wall_time if report.wall_time else 0.0,
        overhead_pct=100.0 * repair / source,
        avg_bitrate_bps=math.fsum(r.bitrate for r in recs) / len(recs),
        decision_us_mean=float(np.mean(timed)) if timed else 0.0,
        decision_us_p99=float(np.percentile(timed, 99)) if timed else 0.0,
    )


# --- sweeps ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    traces: dict  # name -> path or NetworkTrace
    manifests: dict  # mode -> path or Manifest
    losses: tuple = ("none", "const:0.01", "const:0.05", "var:0:0.05")
    strategies: tuple = ("none", "rq", "rs", "rq-tarot", "rs-tarot")
    abrs: tuple = ("throughput",)
    modes: tuple = ("lll", "vod")
    seeds: tuple = (0,)
    gamma: float = 0.5
    lll_throughput_only: bool = True
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    measure_latency: bool = True

    def __post_init__(self):
        for name in ("traces", "losses", "strategies", "abrs", "modes", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name!r} is empty")

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> "SweepSpec":
        base = Path(base or ".")

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        kw = {}
        for name in ("losses", "strategies", "abrs", "modes", "seeds"):
            if name in doc:
                kw[name] = tuple(doc[name])
        if "replications" in doc and "seeds" not in doc:
            kw["seeds"] = tuple(range(int(doc["replications"])))
        for name in ("gamma", "lll_throughput_only"):
            if name in doc:
                kw[name] = doc[name]
        if "hp" in doc:
            kw["hp"] = Hyperparameters.from_dict(doc["hp"])
        try:
            traces = {k: resolve(v) for k, v in doc["traces"].items()}
            manifests = {k: resolve(v) for k, v in doc["manifests"].items()}
        except KeyError as e:
            raise ValueError(f"sweep spec is missing {e.args[0]!r}") from None
        return cls(traces=traces, manifests=manifests, **kw)

    @classmethod
    def from_json(cls, path) -> "SweepSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)

    def cells(self) -> list:
        out = []
        for mode in self.modes:
            for trace in self.traces:
                for loss in self.losses:
                    for strategy in self.strategies:
                        for abr in self.abrs:
                            if mode == "lll" and self.lll_throughput_only and abr != "throughput":
                                continue
                            for seed in self.seeds:
                                out.append((mode, trace, loss, strategy, abr, seed))
        return out


@dataclass
class CellResult:
    key: tuple  # (mode, trace, loss, strategy, abr, seed)
    summary: MetricsSummary | None = None
    error: str | None = None
    report: SessionReport | None = None


@dataclass
class SweepResult:
    cells: list
    rows: list  # MetricsSummary per (mode, loss, strategy, abr), averaged

    @property
    def errors(self) -> list:
        return [c for c in self.cells if c.error]


def _resolve(obj, loader):
    if isinstance(obj, (Manifest, NetworkTrace)):
        return obj
    try:
        return loader(obj)
    except (OSError, ValueError) as e:
        return f"{type(e).__name__}: {e}"


def _run_cell(job):
    key, manifest, trace, cfg, keep = job
    if isinstance(manifest, str) or manifest is None:
        return CellResult(key, error=manifest or f"no manifest for mode {key[0]!r}")
    if isinstance(trace, str):
        return CellResult(key, error=trace)
    try:
        report = run_session(manifest, trace, cfg)
    except ValueError as e:
        return CellResult(key, error=f"ValueError: {e}")
    return CellResult(key, summary=summarize(report), report=report if keep else None)


def run_sweep(spec: SweepSpec, workers: int = 1, keep_reports: bool = False) -> SweepResult:
    manifests = {m: _resolve(spec.manifests[m], load_manifest) if m in spec.manifests else None
                 for m in spec.modes}
    traces = {t: _resolve(p, load_trace) for t, p in spec.traces.items()}
    jobs = []
    for key in spec.cells():
        mode, trace, loss, strategy, abr, seed = key
        try:
            profile = LossProfile.parse(loss, seed=seed)
        except ValueError as e:
            jobs.append((key, f"ValueError: {e}", traces[trace], None, keep_reports))
            continue
        cfg = SessionConfig(mode=mode, abr=abr, fec=strategy, loss=profile, gamma=spec.gamma,
                            seed=seed, hp=spec.hp, measure_latency=spec.measure_latency)
        jobs.append((key, manifests[mode], traces[trace], cfg, keep_reports))

    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, jobs, chunksize=4))
    else:
        results = [_run_cell(j) for j in jobs]
    # merge by key, never by completion order
    order = {k: i for i, k in enumerate(spec.cells())}
    results.sort(key=lambda c: order[c.key])
    return SweepResult(results, aggregate(results, spec))


def aggregate(cells: list, spec: SweepSpec) -> list:
    groups: dict = {}
    for c in cells:
        if c.summary is None:
            continue
        mode, _, loss, strategy, abr, _ = c.key
        groups.setdefault((mode, loss, strategy, abr), []).append(c.summary)
    rows = []
    for mode in spec.modes:
        for loss in spec.losses:
            for strategy in spec.strategies:
                for abr in spec.abrs:
                    got = groups.get((mode, loss, strategy, abr))
                    if not got:
                        continue
                    nums = {f.name: math.fsum(getattr(s, f.name) for s in got) / len(got)
                            for f in fields(MetricsSummary) if f.name not in LABELS}
                    rows.append(MetricsSummary(mode, loss, strategy, abr, **nums))
    return rows


# --- output ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return format(v, f".{SIG_DIGITS}g")
    return str(v)


def table_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = r.row()
        w.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def table_json(rows: list) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "table", "columns": list(COLUMNS),
           "rows": [r.row() for r in rows]}
    return json.dumps(doc, indent=1)


def parse_table_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [MetricsSummary(**{c: (row[c] if c in LABELS else float(row[c])) for c in COLUMNS})
            for row in reader]


def parse_table_json(text: str) -> list:
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION or doc.get("kind") != "table":
        raise ValueError("not a version-1 metrics table")
    return [MetricsSummary(**r) for r in doc["rows"]]


def report_json(report: SessionReport, per_segment: bool = False) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "session",
           "summary": summarize(report).row()}
    doc.update(report.to_dict(per_segment=per_segment))
    if not per_segment:
        doc.pop("records")
    return json.dumps(doc, indent=1)


def segments_csv(report: SessionReport) -> str:
    buf = io.StringIO()
    if not report.records:
        return ""
    cols = list(asdict(report.records[0]))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in report.records:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def emit(obj, path, fmt: str | None = None, per_segment: bool = False) -> Path:
    """Write a table (list of MetricsSummary), a SweepResult or a SessionReport.

    The format defaults to the file extension. A session written as CSV is its
    one-row summary; with ``per_segment`` the segment log goes next to it as
    ``<stem>.segments.csv``.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "json").lower()
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown output format {fmt!r}")
    if isinstance(obj, SweepResult):
        obj = obj.rows
    if isinstance(obj, MetricsSummary):
        obj = [obj]
    if isinstance(obj, SessionReport):
        if fmt == "json":
            text = report_json(obj, per_segment)
        else:
            text = table_csv([summarize(obj)])
            if per_segment:
                path.with_name(path.stem + ".segments.csv").write_text(segments_csv(obj))
    else:
        text = table_csv(obj) if fmt == "csv" else table_json(obj)
    path.write_text(text)
    return path


def strip_timing(rows: list) -> list:
    return [replace(r, decision_us_mean=0.0, decision_us_p99=0.0) for r in rows]
