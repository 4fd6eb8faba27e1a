"""Exhaustive reference selector.

Written as one flat loop straight from the per-segment procedure, with no
helpers shared with :mod:`tarot.controller`; tests use it to check the
vectorized selector and the optimality/Pareto/monotonicity properties.
"""

from __future__ import annotations

import math

from .controller import Hyperparameters, TelemetryState
from .fec import CandidateLibrary, FecConfig


def enumerate_scores(state: TelemetryState, library: CandidateLibrary, hp: Hyperparameters):
    """Every candidate as (cfg, status, J, (P_loss, P_over, P_blk), weights).

    status is "ok", "infeasible" or "rejected"; J and the penalties are None
    unless status is "ok".
    """
    pl, bl, gp, br = state.pl, state.bl, state.gp, state.br

    B_eff = bl
    if B_eff < 0:
        B_eff = 0.0
    if B_eff > hp.B_sat:
        B_eff = hp.B_sat
    h0 = (gp - br) / max(br, hp.eps)
    h0 = min(max(h0, -10.0), 10.0)
    h0_pos = max(0.0, h0)
    alpha = hp.alpha_min + hp.alpha_B * max(0.0, hp.B_crit - B_eff) - hp.alpha_h * min(h0_pos, hp.h_cap)
    alpha = max(0.5, alpha)

    rows = []
    for c in library:
        n, k, S = c.n, c.k, c.S
        T = n + k
        o = k / n
        cov = k / T
        if o < alpha * pl:
            rows.append((c, "infeasible", None, None, None))
            continue

        if pl <= cov and cov > 0:
            l_eff = pl * (0.4 + 0.6 * (1.0 - (cov - pl) / cov))
        else:
            l_eff = pl - 0.8 * cov
        l_eff = max(0.0, min(l_eff, pl))

        g = gp * (1.0 - l_eff) / max((1.0 - pl) * (1.0 + o), hp.eps)
        h = (g - br) / max(br, hp.eps)
        h = min(max(h, -10.0), 10.0)
        hp_, hn_ = max(0.0, h), max(0.0, -h)

        o_free = hp.o_0 + hp.k_B * max(0.0, hp.B_crit - B_eff) + hp.k_h * min(hp_, hp.h_cap)
        o_free = max(0.0, min(o_free, hp.o_cap))
        p_over = max(0.0, o - o_free) ** hp.alpha_over

        nbytes = n * S if hp.encode_charge == "source" else T * S
        t_enc = (c.codec.fixed_seconds + nbytes * c.codec.ns_per_byte * 1e-9) if k > 0 else 0.0
        t_blk = 8.0 * T * S / max(gp, hp.eps) + t_enc
        if t_blk > hp.hardcap_tblk * B_eff:
            rows.append((c, "rejected", None, None, None))
            continue
        p_blk = min(1.0, max(0.0, t_blk / (hp.eta * B_eff) - 1.0))

        short = max(0.0, n * pl - c.codec.beta * k)
        p_loss = short * short

        w_l = hp.w_loss_min + hp.lambda_p * min(pl, hp.p_cap)
        w_o = hp.w_over_min + hp.lambda_B * (B_eff / hp.B_sat) + hp.lambda_h * min(hp_, hp.h_cap)
        w_b = hp.w_blk_min + hp.lambda_risk * max(0.0, 1.0 - B_eff / hp.B_crit) + hp.lambda_hneg * hn_
        s = w_l + w_o + w_b
        w = (w_l / s, w_o / s, w_b / s)
        J = w[0] * p_loss + w[1] * p_over + w[2] * p_blk
        rows.append((c, "ok", J, (p_loss, p_over, p_blk), w))
    return rows


def brute_force_decide(state: TelemetryState, library: CandidateLibrary,
                       hp: Hyperparameters = Hyperparameters()) -> tuple[FecConfig, float]:
    """(selected config, its J); J is 0 for the zero-loss bypass and inf for the fallback."""
    if len(library) == 0:
        raise ValueError("candidate library is empty")
    if state.pl < hp.eps_pl:
        return FecConfig(1, 0, 1, library[0].codec), 0.0

    rows = enumerate_scores(state, library, hp)
    best, best_J = None, math.inf
    for c, status, J, _, _ in rows:
        if status == "ok" and J < best_J:
            best, best_J = c, J
    if best is not None:
        return best, best_J

    B_eff = min(max(state.bl, 0.0), hp.B_sat)
    capped = []
    for c in library:
        nbytes = c.n * c.S if hp.encode_charge == "source" else (c.n + c.k) * c.S
        t_enc = (c.codec.fixed_seconds + nbytes * c.codec.ns_per_byte * 1e-9) if c.k > 0 else 0.0
        t_blk = 8.0 * (c.n + c.k) * c.S / max(state.gp, hp.eps) + t_enc
        if not t_blk > hp.hardcap_tblk * B_eff:
            capped.append(c)
    pool = capped or list(library)
    top = pool[0]
    for c in pool:
        if c.k / (c.n + c.k) > top.k / (top.n + top.k):
            top = c
    return top, math.inf


def brute_force_select(state: TelemetryState, library: CandidateLibrary,
                       hp: Hyperparameters = Hyperparameters()) -> FecConfig:
    return brute_force_decide(state, library, hp)[0]
