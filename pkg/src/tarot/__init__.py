"""Per-segment FEC selection for adaptive video streaming, with a trace-driven simulator."""

from .controller import Decision, Hyperparameters, TelemetryState, decide, rfec_select, select_config
from .fec import (
    RAPTORQ,
    REED_SOLOMON,
    XOR,
    CandidateLibrary,
    FecConfig,
    GridSpec,
    build_candidate_library,
    decode_feasible,
    default_grid,
    encoding_latency,
)
from .loss import LossProfile, fec_payload_goodput, goodput_under_loss, residual_loss, sample_loss
from .simulator import Manifest, NetworkTrace, SessionConfig, SessionReport, run_session

__all__ = [
    "Decision", "Hyperparameters", "TelemetryState", "decide", "rfec_select", "select_config",
    "RAPTORQ", "REED_SOLOMON", "XOR", "CandidateLibrary", "FecConfig", "GridSpec",
    "build_candidate_library", "decode_feasible", "default_grid", "encoding_latency",
    "LossProfile", "fec_payload_goodput", "goodput_under_loss", "residual_loss", "sample_loss",
    "Manifest", "NetworkTrace", "SessionConfig", "SessionReport", "run_session",
]
