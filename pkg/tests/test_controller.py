import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from tarot.controller import (
    INFEASIBLE,
    REJECTED,
    Hyperparameters,
    LossEstimator,
    TelemetryState,
    adaptive_weights,
    block_penalty,
    block_time,
    decide,
    effective_buffer,
    fec_aware_headroom,
    headroom,
    loss_penalty,
    overhead_allowance,
    overhead_penalty,
    protection_margin,
    rfec_select,
    score_candidate,
    select_config,
    smooth_loss,
)
from tarot.fec import (
    RAPTORQ,
    REED_SOLOMON,
    XOR,
    CandidateLibrary,
    FecConfig,
    build_candidate_library,
    default_grid,
    encoding_latency,
)
from tarot.oracle import brute_force_decide, brute_force_select, enumerate_scores

HP = Hyperparameters()
RQ_LIB = build_candidate_library(default_grid(RAPTORQ))
RS_LIB = build_candidate_library(default_grid(REED_SOLOMON))
MBPS = 1e6

states = st.builds(
    TelemetryState,
    br=st.floats(1e5, 5e7),
    bl=st.floats(0, 60),
    pl=st.one_of(st.just(0.0), st.floats(0, 0.35)),
    gp=st.floats(0, 1e8),
)


def test_table3_defaults():
    expected = dict(B_sat=6.0, B_crit=3.0, h_cap=2.0, alpha_min=1.0, alpha_B=0.5, alpha_h=0.5,
                    o_0=0.01, k_B=0.02, k_h=0.03, o_cap=0.35, alpha_over=1.5, eta=0.5,
                    hardcap_tblk=1.5, w_loss_min=0.5, lambda_p=6.0, p_cap=0.15, w_over_min=0.5,
                    lambda_B=0.5, lambda_h=0.4, w_blk_min=0.3, lambda_risk=0.6, lambda_hneg=0.6)
    got = HP.to_dict()
    for k, v in expected.items():
        assert got[k] == v, k


def test_hyperparameters_from_json(tmp_path):
    p = tmp_path / "hp.json"
    p.write_text(json.dumps({"o_cap": 0.2, "eta": 0.25}))
    hp = Hyperparameters.from_json(p)
    assert hp.o_cap == 0.2 and hp.eta == 0.25 and hp.B_sat == 6.0
    with pytest.raises(ValueError):
        Hyperparameters.from_dict({"not_a_knob": 1})
    with pytest.raises(ValueError):
        Hyperparameters.from_dict({"eta": -1})


def test_telemetry_validation():
    for bad in (dict(br=0, bl=1, pl=0, gp=1), dict(br=1, bl=-1, pl=0, gp=1),
                dict(br=1, bl=1, pl=1.5, gp=1), dict(br=1, bl=1, pl=0, gp=-1)):
        with pytest.raises(ValueError):
            TelemetryState(**bad)


def test_smooth_loss():
    assert smooth_loss(0.04, 0.02, 0.5) == pytest.approx(0.03)
    assert smooth_loss(0.07, 0.07, 0.3) == pytest.approx(0.07)
    assert smooth_loss(0.09, 0.01, 1.0) == 0.09
    est = LossEstimator(0.5)
    assert est.estimate == 0.0
    assert est.update(0.04) == 0.04  # first observation seeds the average
    assert est.update(0.02) == pytest.approx(0.03)
    assert HP.ewma_lambda("lll") > HP.ewma_lambda("vod")


def test_effective_buffer():
    assert effective_buffer(60, HP) == 6
    assert effective_buffer(0, HP) == 0
    assert effective_buffer(2.5, HP) == 2.5


def test_headroom():
    assert headroom(8e6, 4e6) == (1.0, 1.0, 0.0)
    assert headroom(4e6, 4e6) == (0.0, 0.0, 0.0)
    assert headroom(0, 4e6) == (-1.0, 0.0, 1.0)
    assert headroom(1e12, 1.0).h == 10.0


def test_protection_margin():
    assert protection_margin(TelemetryState(4e6, 6, 0.05, 4e6), HP) == 1.0
    assert protection_margin(TelemetryState(4e6, 1, 0.05, 4e6), HP) == 2.0
    assert protection_margin(TelemetryState(4e6, 6, 0.05, 12e6), HP) == 0.5
    assert protection_margin(TelemetryState(4e6, 60, 0.05, 400e6), HP) == 0.5


def test_fec_aware_headroom():
    s = TelemetryState(4e6, 6, 0.0, 10e6)
    assert fec_aware_headroom(s, FecConfig(20, 0, 64)) == headroom(10e6, 4e6)
    s = TelemetryState(4 * MBPS, 6, 0.01, 10 * MBPS)
    h = fec_aware_headroom(s, FecConfig(20, 10, 64))
    g = 10 * MBPS * (1 - 0.00418) / (0.99 * 1.5)
    assert g == pytest.approx(6.706e6, abs=1e3)
    assert h.h == pytest.approx((g - 4 * MBPS) / (4 * MBPS), rel=1e-9)
    assert h.h == pytest.approx(0.6765, abs=1e-4)
    assert fec_aware_headroom(TelemetryState(4e6, 6, 0.0, 4e6), FecConfig(20, 2, 64)).h < 0


def test_fec_aware_headroom_total_loss_guarded():
    h = fec_aware_headroom(TelemetryState(4e6, 6, 1.0, 4e6), FecConfig(20, 2, 64), HP)
    assert math.isfinite(h.h) and -10 <= h.h <= 10


def test_overhead_allowance():
    assert overhead_allowance(3.0, 0.0, HP) == pytest.approx(0.01)
    assert overhead_allowance(6.0, 0.0, HP) == pytest.approx(0.01)
    assert overhead_allowance(1.0, 1.0, HP) == pytest.approx(0.08)
    big = Hyperparameters(k_B=1.0, k_h=1.0)
    assert overhead_allowance(0.0, 2.0, big) == 0.35


def test_loss_penalty():
    assert loss_penalty(20, 10, 0.05, 1.0) == 0.0
    assert loss_penalty(20, 0, 0.05, 0.99) == pytest.approx(1.0)
    assert loss_penalty(20, 3, 0.0, 0.8) == 0.0


def test_overhead_penalty():
    assert overhead_penalty(0.5, 0.01, 1.5) == pytest.approx(0.3430, abs=1e-4)
    assert overhead_penalty(0.05, 0.05, 1.5) == 0.0
    assert overhead_penalty(0.05, 0.01, 1.5) == pytest.approx(0.008, rel=1e-12)


def test_block_penalty():
    cfg = FecConfig(20, 10, 64, REED_SOLOMON)
    assert block_time(cfg, 1 * MBPS, HP) == pytest.approx(0.01536 + 20 * 64 * 35e-9)
    assert block_penalty(cfg, 1 * MBPS, 6.0, HP) == 0.0
    # pick gp so that t_blk lands at 1.2 x the deadline (eta * B_eff = 0.5 s)
    B_eff = 1.0
    enc = encoding_latency(cfg)
    gp = 8 * 30 * 64 / (1.2 * 0.5 - enc)
    assert block_penalty(cfg, gp, B_eff, HP) == pytest.approx(0.2, abs=1e-9)
    gp = 8 * 30 * 64 / (1.4 * B_eff - enc)  # past twice the deadline, under the hard cap
    assert block_penalty(cfg, gp, B_eff, HP) == 1.0
    gp = 8 * 30 * 64 / (1.6 * B_eff)
    assert block_penalty(cfg, gp, B_eff, HP) is REJECTED
    assert block_penalty(cfg, 1 * MBPS, 0.0, HP) is REJECTED


def test_adaptive_weights():
    w = adaptive_weights(0.0, 6.0, 0.0, 0.0, HP)
    assert w == pytest.approx((0.5 / 1.8, 1.0 / 1.8, 0.3 / 1.8), abs=1e-15)
    assert w == pytest.approx((0.2778, 0.5556, 0.1667), abs=1e-4)
    # the loss weight saturates at p_cap
    w1 = adaptive_weights(0.15, 6.0, 0.0, 0.0, HP)
    w2 = adaptive_weights(0.6, 6.0, 0.0, 0.0, HP)
    assert w1 == w2
    assert w1[0] * (1.4 + 1.0 + 0.3) == pytest.approx(1.4)


def test_golden_score():
    s = TelemetryState(br=4 * MBPS, bl=6.0, pl=0.05, gp=10 * MBPS)
    sc = score_candidate(FecConfig(20, 10, 64, REED_SOLOMON), s, HP)
    # by hand: raw h = 1.5 -> alpha = 0.5; cov = 1/3 so l_eff = 0.05 * 0.49 = 0.0245;
    # G = 10e6 * 0.9755 / (0.95 * 1.5); h = (G - 4e6) / 4e6
    G = 10e6 * 0.9755 / (0.95 * 1.5)
    h = (G - 4e6) / 4e6
    free = 0.01 + 0.03 * h
    p_over = (0.5 - free) ** 1.5
    w = (0.8, 0.5 + 0.5 + 0.4 * h, 0.3)
    J = w[1] / sum(w) * p_over
    assert sc.components[0] == 0.0 and sc.components[2] == 0.0
    assert sc.components[1] == pytest.approx(p_over, rel=1e-12)
    assert sc.J == pytest.approx(J, rel=1e-12)
    assert sc.J == pytest.approx(0.17283443116729233, rel=1e-12)
    assert sum(sc.weights) == pytest.approx(1.0, abs=1e-12)


def test_score_candidate_sentinels():
    s = TelemetryState(4e6, 6.0, 0.2, 4e6)
    assert score_candidate(FecConfig(20, 1, 64), s, HP) is INFEASIBLE
    safe = TelemetryState(1e6, 60.0, 0.0, 1e10)
    sc = score_candidate(FecConfig(20, 0, 64), safe, HP)
    assert sc.J == 0.0 and sc.components == (0.0, 0.0, 0.0)


def test_zero_loss_returns_no_fec():
    for bl in (0.0, 2.0, 30.0):
        d = decide(TelemetryState(4e6, bl, 0.0, 1e6), RQ_LIB, HP)
        assert d.cfg.k == 0 and d.kind == "zero-loss"
    assert select_config(TelemetryState(4e6, 6, 0.5e-4, 1e7), RQ_LIB).k == 0


def test_empty_library():
    with pytest.raises(ValueError):
        select_config(TelemetryState(4e6, 6, 0.05, 1e7), CandidateLibrary([]))
    with pytest.raises(ValueError):
        brute_force_select(TelemetryState(4e6, 6, 0.05, 1e7), CandidateLibrary([]))


def test_fallback_hand_library():
    # pl = 0.9 and alpha >= 0.5 need k/n >= 0.45: none of these qualify
    lib = CandidateLibrary([FecConfig(20, 1, 64), FecConfig(20, 5, 64), FecConfig(20, 8, 8192)])
    s = TelemetryState(1e6, 1.0, 0.9, 1e6)
    # the 8192-byte block needs about 1.84 s at 1 Mbit/s, above 1.5 x B_eff
    d = decide(s, lib, HP)
    assert d.kind == "fallback" and d.cfg == FecConfig(20, 5, 64) and d.J == math.inf
    assert brute_force_decide(s, lib, HP) == (FecConfig(20, 5, 64), math.inf)
    # when nothing passes the cap, plain max coverage wins
    s0 = TelemetryState(1e6, 0.0, 0.9, 1e6)
    assert select_config(s0, lib) == FecConfig(20, 8, 8192)
    assert brute_force_select(s0, lib) == FecConfig(20, 8, 8192)


def test_single_candidate_library():
    lib = CandidateLibrary([FecConfig(20, 10, 64)])
    s = TelemetryState(4e6, 6, 0.05, 1e7)
    assert select_config(s, lib) == lib[0] == brute_force_select(s, lib)


def test_ties_follow_library_order():
    lib = CandidateLibrary([FecConfig(20, 1, 64, REED_SOLOMON), FecConfig(20, 1, 128, REED_SOLOMON),
                            FecConfig(40, 2, 64, REED_SOLOMON)])
    s = TelemetryState(1e6, 60, 0.05, 1e9)
    rows = [r for r in enumerate_scores(s, lib, HP) if r[1] == "ok"]
    assert len({r[2] for r in rows}) == 1 and rows[0][2] == 0.0
    assert select_config(s, lib) == lib[0] == brute_force_select(s, lib)


def _same(a, b):
    return a == b or (math.isinf(a) and math.isinf(b)) or abs(a - b) <= 1e-12 * max(1.0, abs(a))


@given(states, st.sampled_from([RQ_LIB, RS_LIB]))
def test_matches_oracle(s, lib):
    d = decide(s, lib, HP)
    cfg, J = brute_force_decide(s, lib, HP)
    assert d.cfg == cfg
    assert _same(d.J, J)


@given(states, st.lists(st.builds(FecConfig, st.integers(1, 120), st.integers(0, 60),
                                  st.sampled_from([16, 64, 512, 4096]),
                                  st.sampled_from([RAPTORQ, REED_SOLOMON, XOR])),
                        min_size=1, max_size=25))
def test_matches_oracle_random_libraries(s, cands):
    lib = CandidateLibrary(cands)
    assert select_config(s, lib) == brute_force_select(s, lib)


@given(states)
def test_selected_config_is_feasible(s):
    d = decide(s, RQ_LIB, HP)
    if d.kind == "optimal":
        assert d.cfg.k / d.cfg.n >= d.alpha * s.pl


@given(states)
def test_zero_loss_never_protects(s):
    s0 = TelemetryState(s.br, s.bl, 0.0, s.gp)
    assert select_config(s0, RQ_LIB).k == 0
    assert rfec_select(s0, 20, 64, RAPTORQ).k == 0


@given(states, st.sampled_from(list(RQ_LIB)))
def test_weights_normalized(s, cfg):
    sc = score_candidate(cfg, s, HP)
    if sc not in (INFEASIBLE, REJECTED):
        assert abs(sum(sc.weights) - 1.0) <= 1e-12
        assert all(w > 0 for w in sc.weights)
        assert all(p >= 0 for p in sc.components)
        assert sc.J == pytest.approx(sum(w * p for w, p in zip(sc.weights, sc.components)), rel=1e-12)


@given(states, st.floats(0, 2))
def test_overestimated_loss_stays_feasible(s, delta):
    assume(s.pl > 0)
    noisy = TelemetryState(s.br, s.bl, min(1.0, s.pl * (1 + delta)), s.gp)
    d = decide(noisy, RQ_LIB, HP)
    if d.kind == "optimal":
        assert d.cfg.k / d.cfg.n >= protection_margin(s, HP) * s.pl


def test_penalties_monotone_on_grids():
    pls = np.linspace(0, 1, 201)
    for n, k, beta in ((20, 1, 0.99), (64, 5, 1.0), (4, 1, 0.8)):
        vals = [loss_penalty(n, k, p, beta) for p in pls]
        assert all(a <= b for a, b in zip(vals, vals[1:]))
    os_ = np.linspace(0, 1, 201)
    for free in (0.0, 0.01, 0.2, 0.35):
        vals = [overhead_penalty(o, free, 1.5) for o in os_]
        assert all(a <= b for a, b in zip(vals, vals[1:]))
    cfg = FecConfig(20, 2, 64, REED_SOLOMON)
    gps = np.geomspace(1e9, 1e4, 200)  # shrinking goodput, growing t_blk
    vals = [block_penalty(cfg, g, 6.0, HP) for g in gps]
    vals = [1.0 if v is REJECTED else v for v in vals]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_rfec_examples():
    assert rfec_select(TelemetryState(4e6, 6, 0.0, 4e6), 20, 64, RAPTORQ).k == 0
    one = TelemetryState(4e6, 6, 0.05, 4e6)
    assert protection_margin(one, HP) == 1.0
    assert rfec_select(one, 20, 64, RAPTORQ) == FecConfig(20, 1, 64, RAPTORQ)
    two = TelemetryState(4e6, 1, 0.05, 4e6)
    assert protection_margin(two, HP) == 2.0
    assert rfec_select(two, 20, 64, RAPTORQ) == FecConfig(20, 2, 64, RAPTORQ)


@given(states, st.integers(1, 200), st.sampled_from([64, 256]))
def test_rfec_minimal_feasible(s, n, S):
    cfg = rfec_select(s, n, S, RAPTORQ)
    assert (cfg.n, cfg.S) == (n, S)
    if s.pl >= HP.eps_pl:
        need = protection_margin(s, HP) * s.pl
        assert cfg.k / n >= need
        assert cfg.k == 0 or (cfg.k - 1) / n < need
