"""Pure-Python hot kernels.

This module and ``_kernel.pyx`` implement the same arithmetic in the same
order, so both backends produce bit-identical call logs. Any change here must
be mirrored in the Cython source.
"""

from math import floor

TICK_S = 0.06
QUEUE_CAP_S = 0.4
AUDIO_RATE = 40.0  # kbps, 50 pkt/s
AUDIO_PKT_KBIT = 0.8  # 80 B payload + 20 B headers
VIDEO_PKT_KBIT = 8.0  # 1000 B
MIN_RATE = 10.0
MAX_RATE = 8000.0
BASE_DRIFT_MS = 0.02  # per tick; lets the delay baseline forget a stale minimum
PEAK_DECAY = 0.997  # per tick; peak receive rate half-life about 14 s

# tick output columns
C_T = 0
C_SEND = 1
C_RECV = 2
C_OWD = 3
C_LOST = 4
C_VPKT = 5
C_APKT = 6
C_QUEUE = 7
C_BASE = 8
C_SENT_KBIT = 9
C_RLOST_KBIT = 10
C_DROP_KBIT = 11
C_VRECV_KBIT = 12
C_ARECV_KBIT = 13
NCOL = 14

# link state slots
L_QA = 0
L_QV = 1
L_CARRY_AS = 2
L_CARRY_VS = 3
L_CARRY_AR = 4
L_CARRY_VR = 5
L_CARRY_DROP = 6
NLINK = 7

# estimator kinds and state slots
SAFE_FILTER = 0
PROBE_MAX = 1
LOSS_TOLERANT = 2

S_EST = 0
S_RECV = 1
S_BASE = 2
S_PREV_OWD = 3
S_GRAD = 4
S_HOLD = 5
S_LOSS = 6
S_SEEN = 7
S_PERSIST = 8
S_PEAK = 9
NSTATE = 10
NPARAM = 8


def binomial_inv(n, p, u):
    """Binomial(n, p) draw by CDF inversion of one uniform ``u``."""
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    q = 1.0 - p
    pk = q ** n
    cdf = pk
    k = 0
    while u > cdf and k < n:
        pk = pk * ((n - k) / (k + 1.0)) * (p / q)
        k += 1
        cdf += pk
    return k


def clip_rate(x):
    if x < MIN_RATE:
        return MIN_RATE
    if x > MAX_RATE:
        return MAX_RATE
    return x


def estimator_step(kind, params, state, recv, owd, lost, vpk, apk):
    """Advance one estimator by one tick in place; return the new estimate."""
    est = state[S_EST]
    seen = state[S_SEEN]
    npk = lost + vpk + apk
    lf = lost / npk if npk > 0.0 else 0.0
    if seen == 0.0:
        rs = recv
        base = owd
        gs = 0.0
        ls = lf
        peak = recv
    else:
        rs = state[S_RECV] + 0.2 * (recv - state[S_RECV])
        base = state[S_BASE] + BASE_DRIFT_MS
        if owd < base:
            base = owd
        gs = state[S_GRAD] + 0.3 * ((owd - state[S_PREV_OWD]) - state[S_GRAD])
        ls = state[S_LOSS] + 0.2 * (lf - state[S_LOSS])
        peak = PEAK_DECAY * state[S_PEAK]
        if recv > peak:
            peak = recv
    qd = owd - base
    hold = state[S_HOLD]
    persist = state[S_PERSIST]

    if kind == SAFE_FILTER:
        add_step = params[0]
        backoff = params[1]
        qd_thresh = params[2]
        cap = params[3]
        grad_thresh = params[4]
        headroom = params[5]
        hold_ticks = params[6]
        loss_thresh = params[7]
        if qd > qd_thresh:
            if hold <= 0.0:
                est = backoff * est
                hold = hold_ticks
            else:
                hold -= 1.0
        elif hold > 0.0:
            hold -= 1.0
        elif ls > loss_thresh:
            est = 0.95 * est
            hold = hold_ticks
        elif gs > grad_thresh:
            pass
        else:
            est = est + add_step
            bound = headroom * rs + add_step
            if est > bound:
                est = bound
            if est > cap:
                est = cap
    elif kind == PROBE_MAX:
        probe = params[0]
        headroom = params[1]
        qd_thresh = params[2]
        loss_thresh = params[3]
        backoff = params[4]
        hold_ticks = params[5]
        cap = params[6]
        floor_frac = params[7]
        if hold > 0.0:
            hold -= 1.0
        elif ls > loss_thresh or qd > qd_thresh:
            est = backoff * est
            # never back off below a fraction of the recent peak receive rate
            if est < floor_frac * peak:
                est = floor_frac * peak
            hold = hold_ticks
        else:
            est = probe * est
            bound = headroom * rs
            if est > bound:
                est = bound
            if est > cap:
                est = cap
    else:
        probe = params[0]
        headroom = params[1]
        qd_thresh = params[2]
        backoff = params[3]
        min_step = params[4]
        hold_ticks = params[5]
        persist_ticks = params[6]
        loss_thresh = params[7]
        congested = (qd > qd_thresh and gs > 0.0) or qd > 3.0 * qd_thresh
        if ls > loss_thresh and gs > 1.0:
            congested = True
        if congested:
            persist += 1.0
        else:
            persist = 0.0
        if hold > 0.0:
            hold -= 1.0
        elif persist >= persist_ticks:
            est = backoff * rs
            hold = hold_ticks
            persist = 0.0
        elif not congested:
            up = probe * est
            if up < est + min_step:
                up = est + min_step
            bound = headroom * rs + min_step
            if up > bound:
                up = bound
            if up > est:
                est = up

    est = clip_rate(est)
    state[S_EST] = est
    state[S_RECV] = rs
    state[S_BASE] = base
    state[S_PREV_OWD] = owd
    state[S_GRAD] = gs
    state[S_HOLD] = hold
    state[S_LOSS] = ls
    state[S_SEEN] = seen + 1.0
    state[S_PERSIST] = persist
    state[S_PEAK] = peak
    return est


def link_step(link, cap, base_owd, loss, send_rate, video_on, u, out):
    """Advance the bottleneck by one tick in place; fill the tick row ``out``."""
    audio_rate = send_rate if send_rate < AUDIO_RATE else AUDIO_RATE
    video_rate = send_rate - audio_rate if video_on else 0.0
    a_sent = audio_rate * TICK_S
    v_sent = video_rate * TICK_S

    c = link[L_CARRY_AS] + a_sent / AUDIO_PKT_KBIT
    n_as = floor(c)
    link[L_CARRY_AS] = c - n_as
    c = link[L_CARRY_VS] + v_sent / VIDEO_PKT_KBIT
    n_vs = floor(c)
    link[L_CARRY_VS] = c - n_vs
    n_rl = binomial_inv(int(n_as + n_vs), loss, u)

    a_rl = a_sent * loss
    v_rl = v_sent * loss
    back_a = link[L_QA] + (a_sent - a_rl)
    back_v = link[L_QV] + (v_sent - v_rl)
    backlog = back_a + back_v
    cap_kbit = cap * TICK_S
    if backlog > cap_kbit:
        served = cap_kbit
        frac = served / backlog
        served_a = back_a * frac
        served_v = back_v * frac
    else:
        served = backlog
        served_a = back_a
        served_v = back_v
    rem_a = back_a - served_a
    rem_v = back_v - served_v
    rem = rem_a + rem_v
    qcap = cap * QUEUE_CAP_S
    drop_a = 0.0
    drop_v = 0.0
    if rem > qcap:
        keep = qcap / rem
        qa = rem_a * keep
        qv = rem_v * keep
        drop_a = rem_a - qa
        drop_v = rem_v - qv
    else:
        qa = rem_a
        qv = rem_v
    link[L_QA] = qa
    link[L_QV] = qv

    c = link[L_CARRY_AR] + served_a / AUDIO_PKT_KBIT
    n_ar = floor(c)
    link[L_CARRY_AR] = c - n_ar
    c = link[L_CARRY_VR] + served_v / VIDEO_PKT_KBIT
    n_vr = floor(c)
    link[L_CARRY_VR] = c - n_vr
    c = link[L_CARRY_DROP] + drop_a / AUDIO_PKT_KBIT + drop_v / VIDEO_PKT_KBIT
    n_d = floor(c)
    link[L_CARRY_DROP] = c - n_d

    q = qa + qv
    out[C_SEND] = (a_sent + v_sent) / TICK_S
    out[C_RECV] = served / TICK_S
    out[C_OWD] = base_owd + q / cap * 1000.0
    out[C_LOST] = float(n_rl + n_d)
    out[C_VPKT] = float(n_vr)
    out[C_APKT] = float(n_ar)
    out[C_QUEUE] = q
    out[C_BASE] = base_owd
    out[C_SENT_KBIT] = a_sent + v_sent
    out[C_RLOST_KBIT] = a_rl + v_rl
    out[C_DROP_KBIT] = drop_a + drop_v
    out[C_VRECV_KBIT] = served_v
    out[C_ARECV_KBIT] = served_a


def run_ticks(t0, n, cap, owd, loss, unif, link, active, kinds, params, states,
              video_start, ticks_out, est_out):
    """Simulate ticks ``t0 .. t0+n-1`` with estimator ``active`` in control.

    ``cap``/``owd``/``loss``/``unif`` are per-tick arrays indexed by absolute
    tick. Every estimator observes every tick. ``ticks_out`` and ``est_out``
    receive rows ``t0 .. t0+n-1``.
    """
    n_est = len(kinds)
    link_l = [float(v) for v in link]
    st = [[float(v) for v in states[j]] for j in range(n_est)]
    pr = [[float(v) for v in params[j]] for j in range(n_est)]
    kd = [int(k) for k in kinds]
    row = [0.0] * NCOL
    for i in range(t0, t0 + n):
        send = clip_rate(st[active][S_EST])
        row[C_T] = i * TICK_S
        link_step(link_l, float(cap[i]), float(owd[i]), float(loss[i]), send,
                  i >= video_start, float(unif[i]), row)
        ticks_out[i] = row
        recv = row[C_RECV]
        o = row[C_OWD]
        lost = row[C_LOST]
        vpk = row[C_VPKT]
        apk = row[C_APKT]
        for j in range(n_est):
            est_out[i, j] = estimator_step(kd[j], pr[j], st[j], recv, o, lost, vpk, apk)
    for k in range(NLINK):
        link[k] = link_l[k]
    for j in range(n_est):
        for k in range(NSTATE):
            states[j, k] = st[j][k]

