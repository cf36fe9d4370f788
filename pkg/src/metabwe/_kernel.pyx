# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; arithmetic mirrors ``_kernel_py`` operation for operation."""

from libc.math cimport floor, pow

cdef double TICK_S = 0.06
cdef double QUEUE_CAP_S = 0.4
cdef double AUDIO_RATE = 40.0
cdef double AUDIO_PKT_KBIT = 0.8
cdef double VIDEO_PKT_KBIT = 8.0
cdef double MIN_RATE = 10.0
cdef double MAX_RATE = 8000.0
cdef double BASE_DRIFT_MS = 0.02
cdef double PEAK_DECAY = 0.997


cdef inline long _binomial_inv(long n, double p, double u) nogil:
    cdef double q, pk, cdf
    cdef long k
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    q = 1.0 - p
    pk = pow(q, <double>n)
    cdf = pk
    k = 0
    while u > cdf and k < n:
        pk = pk * (<double>(n - k) / (k + 1.0)) * (p / q)
        k += 1
        cdf += pk
    return k


cdef inline double _clip(double x) nogil:
    if x < MIN_RATE:
        return MIN_RATE
    if x > MAX_RATE:
        return MAX_RATE
    return x


cdef double _estimator_step(long kind, double[:] params, double[:] state,
                            double recv, double owd, double lost, double vpk,
                            double apk) nogil:
    cdef double est = state[0]
    cdef double seen = state[7]
    cdef double npk = lost + vpk + apk
    cdef double lf = lost / npk if npk > 0.0 else 0.0
    cdef double rs, base, gs, ls, qd, hold, persist, bound, up, peak
    cdef bint congested
    if seen == 0.0:
        rs = recv
        base = owd
        gs = 0.0
        ls = lf
        peak = recv
    else:
        rs = state[1] + 0.2 * (recv - state[1])
        base = state[2] + BASE_DRIFT_MS
        if owd < base:
            base = owd
        gs = state[4] + 0.3 * ((owd - state[3]) - state[4])
        ls = state[6] + 0.2 * (lf - state[6])
        peak = PEAK_DECAY * state[9]
        if recv > peak:
            peak = recv
    qd = owd - base
    hold = state[5]
    persist = state[8]

    if kind == 0:
        if qd > params[2]:
            if hold <= 0.0:
                est = params[1] * est
                hold = params[6]
            else:
                hold -= 1.0
        elif hold > 0.0:
            hold -= 1.0
        elif ls > params[7]:
            est = 0.95 * est
            hold = params[6]
        elif gs > params[4]:
            pass
        else:
            est = est + params[0]
            bound = params[5] * rs + params[0]
            if est > bound:
                est = bound
            if est > params[3]:
                est = params[3]
    elif kind == 1:
        if hold > 0.0:
            hold -= 1.0
        elif ls > params[3] or qd > params[2]:
            est = params[4] * est
            if est < params[7] * peak:
                est = params[7] * peak
            hold = params[5]
        else:
            est = params[0] * est
            bound = params[1] * rs
            if est > bound:
                est = bound
            if est > params[6]:
                est = params[6]
    else:
        congested = (qd > params[2] and gs > 0.0) or qd > 3.0 * params[2]
        if ls > params[7] and gs > 1.0:
            congested = True
        if congested:
            persist += 1.0
        else:
            persist = 0.0
        if hold > 0.0:
            hold -= 1.0
        elif persist >= params[6]:
            est = params[3] * rs
            hold = params[5]
            persist = 0.0
        elif not congested:
            up = params[0] * est
            if up < est + params[4]:
                up = est + params[4]
            bound = params[1] * rs + params[4]
            if up > bound:
                up = bound
            if up > est:
                est = up

    est = _clip(est)
    state[0] = est
    state[1] = rs
    state[2] = base
    state[3] = owd
    state[4] = gs
    state[5] = hold
    state[6] = ls
    state[7] = seen + 1.0
    state[8] = persist
    state[9] = peak
    return est


cdef void _link_step(double[:] link, double cap, double base_owd, double loss,
                     double send_rate, bint video_on, double u, double[:] out) nogil:
    cdef double audio_rate = send_rate if send_rate < AUDIO_RATE else AUDIO_RATE
    cdef double video_rate = send_rate - audio_rate if video_on else 0.0
    cdef double a_sent = audio_rate * TICK_S
    cdef double v_sent = video_rate * TICK_S
    cdef double c, n_as, n_vs, n_ar, n_vr, n_d
    cdef double a_rl, v_rl, back_a, back_v, backlog, cap_kbit, served, frac
    cdef double served_a, served_v, rem_a, rem_v, rem, qcap, drop_a, drop_v
    cdef double keep, qa, qv, q
    cdef long n_rl

    c = link[2] + a_sent / AUDIO_PKT_KBIT
    n_as = floor(c)
    link[2] = c - n_as
    c = link[3] + v_sent / VIDEO_PKT_KBIT
    n_vs = floor(c)
    link[3] = c - n_vs
    n_rl = _binomial_inv(<long>(n_as + n_vs), loss, u)

    a_rl = a_sent * loss
    v_rl = v_sent * loss
    back_a = link[0] + (a_sent - a_rl)
    back_v = link[1] + (v_sent - v_rl)
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
    link[0] = qa
    link[1] = qv

    c = link[4] + served_a / AUDIO_PKT_KBIT
    n_ar = floor(c)
    link[4] = c - n_ar
    c = link[5] + served_v / VIDEO_PKT_KBIT
    n_vr = floor(c)
    link[5] = c - n_vr
    c = link[6] + drop_a / AUDIO_PKT_KBIT + drop_v / VIDEO_PKT_KBIT
    n_d = floor(c)
    link[6] = c - n_d

    q = qa + qv
    out[1] = (a_sent + v_sent) / TICK_S
    out[2] = served / TICK_S
    out[3] = base_owd + q / cap * 1000.0
    out[4] = <double>n_rl + n_d
    out[5] = n_vr
    out[6] = n_ar
    out[7] = q
    out[8] = base_owd
    out[9] = a_sent + v_sent
    out[10] = a_rl + v_rl
    out[11] = drop_a + drop_v
    out[12] = served_v
    out[13] = served_a


def binomial_inv(long n, double p, double u):
    return _binomial_inv(n, p, u)


def clip_rate(double x):
    return _clip(x)


def estimator_step(long kind, double[:] params, double[:] state, double recv,
                   double owd, double lost, double vpk, double apk):
    return _estimator_step(kind, params, state, recv, owd, lost, vpk, apk)


def link_step(double[:] link, double cap, double base_owd, double loss,
              double send_rate, bint video_on, double u, double[:] out):
    _link_step(link, cap, base_owd, loss, send_rate, video_on, u, out)


def run_ticks(long t0, long n, double[:] cap, double[:] owd, double[:] loss,
              double[:] unif, double[:] link, long active, long[:] kinds,
              double[:, :] params, double[:, :] states, long video_start,
              double[:, :] ticks_out, double[:, :] est_out):
    cdef long i, j
    cdef long n_est = kinds.shape[0]
    cdef double send
    cdef double[:] row
    with nogil:
        for i in range(t0, t0 + n):
            send = _clip(states[active, 0])
            row = ticks_out[i]
            row[0] = i * TICK_S
            _link_step(link, cap[i], owd[i], loss[i], send, i >= video_start,
                       unif[i], row)
            for j in range(n_est):
                est_out[i, j] = _estimator_step(kinds[j], params[j], states[j],
                                                row[2], row[3], row[4], row[5],
                                                row[6])
