import numpy as np
import pytest

from metabwe import _kernel_py as K
from metabwe import kernels
from metabwe.bwe import DEFAULT_POOL, make_pool
from metabwe.meta import FixedPolicy, RandomPolicy
from metabwe.sim import (
    LinkState, SimConfig, TickStats, aggregate_window, run_call, step_tick, windows_per_interval)
from metabwe.trace import Trace, TraceSegment, generate_trace

POOL = make_pool(DEFAULT_POOL)


def seg(cap=1000.0, owd=30.0, loss=0.0):
    return TraceSegment(1.0, cap, owd, loss)


def test_overload_tick_builds_queue():
    link = LinkState()
    tk = step_tick(link, seg(1000.0, 30.0), 2000.0, np.random.default_rng(0))
    assert tk.queue_bits == pytest.approx(60.0)  # (2000 - 1000) * 0.06 kbit
    assert tk.owd == pytest.approx(30.0 + 60.0)  # ms
    assert tk.recv_rate == pytest.approx(1000.0)
    assert link.queue == pytest.approx(60.0)


def test_no_backlog_tick():
    tk = step_tick(LinkState(), seg(1000.0, 25.0), 400.0, np.random.default_rng(0))
    assert tk.recv_rate == pytest.approx(400.0)
    assert tk.owd == 25.0
    assert tk.lost_pkts == 0
    assert tk.queue_bits == 0.0


def test_total_random_loss_delivers_nothing_new():
    tk = step_tick(LinkState(), seg(1000.0, 25.0, 0.999999), 500.0, np.random.default_rng(0))
    assert tk.recv_rate == pytest.approx(0.0, abs=1e-3)
    # loss = 1 is outside a trace segment's domain but the kernel handles it
    row = np.zeros(K.NCOL)
    K.link_step(np.zeros(K.NLINK), 1000.0, 25.0, 1.0, 500.0, True, 0.5, row)
    assert row[K.C_RECV] == 0.0
    assert row[K.C_LOST] > 0


def test_queue_cap_drops_excess():
    link = LinkState()
    rng = np.random.default_rng(0)
    for _ in range(50):
        tk = step_tick(link, seg(200.0), 8000.0, rng)
    assert tk.queue_bits == pytest.approx(200.0 * 0.4)
    assert tk.owd == pytest.approx(30.0 + 400.0)
    assert tk.dropped_kbit > 0 and tk.lost_pkts > 0


def test_send_rate_is_clipped():
    tk = step_tick(LinkState(), seg(9000.0), 20000.0, np.random.default_rng(0))
    assert tk.send_rate == pytest.approx(8000.0)
    tk = step_tick(LinkState(), seg(9000.0), 1.0, np.random.default_rng(0))
    assert tk.send_rate == pytest.approx(10.0)


def _tick(vpk, apk, owd=40.0, recv=500.0, lost=0.0):
    return TickStats(t=0.0, send_rate=recv, recv_rate=recv, owd=owd, lost_pkts=lost,
                     video_pkts=vpk, audio_pkts=apk, queue_bits=0.0, base_owd=30.0)


def test_aggregate_identical_ticks():
    w = aggregate_window([_tick(5, 3, lost=1.0)] * 10)
    assert w.recv_rate == pytest.approx(500.0)
    assert w.owd == pytest.approx(40.0)
    assert w.lost_pkts == 10.0
    assert w.received_pkts == 80.0
    assert w.video_prop == pytest.approx(5 / 8) and w.audio_prop == pytest.approx(3 / 8)
    assert w.queuing_delay == pytest.approx(10.0)


def test_interarrival_from_packet_count():
    w = aggregate_window([_tick(27, 3)] * 10)  # 300 packets
    assert w.interarrival == pytest.approx(2.0)


def test_empty_window():
    w = aggregate_window([_tick(0, 0, recv=0.0)] * 10)
    assert w.video_prop == 0.0 and w.audio_prop == 0.0
    assert w.interarrival == 600.0


def test_window_needs_ten_ticks():
    with pytest.raises(ValueError, match="exactly 10"):
        aggregate_window([_tick(1, 1)] * 9)


def test_decision_interval_validation():
    assert windows_per_interval(6.0) == 10
    assert windows_per_interval(1.2) == 2
    with pytest.raises(ValueError, match="multiple"):
        windows_per_interval(5.0)


@pytest.mark.parametrize("k", range(3))
def test_fixed_policy_call(k):
    log = run_call(generate_trace("fluct_hbw", 1, 120.0), FixedPolicy(k), POOL, seed=3)
    assert len(log.records) == 20
    assert log.actions == [k] * 20
    for r in log.records:
        assert 1.0 <= r.video_mos <= 5.0 and 1.0 <= r.audio_mos <= 5.0
    assert log.estimates.shape == (2000, 3)
    assert np.all((log.estimates >= 10.0) & (log.estimates <= 8000.0))


def test_call_is_deterministic():
    tr = generate_trace("burst_lbw", 9, 120.0)
    a = run_call(tr, RandomPolicy(4), POOL, seed=77)
    b = run_call(tr, RandomPolicy(4), POOL, seed=77)
    assert a.digest() == b.digest()
    c = run_call(tr, RandomPolicy(4), POOL, seed=78)
    assert a.digest() != c.digest()


@pytest.mark.parametrize("regime", ["stable_lbw", "burst_lbw", "fluct_hbw", "lte"])
def test_bit_conservation(regime):
    log = run_call(generate_trace(regime, 2, 120.0), RandomPolicy(1), POOL, seed=5)
    t = log.ticks
    sent = t[:, K.C_SENT_KBIT].sum()
    recv = (t[:, K.C_VRECV_KBIT] + t[:, K.C_ARECV_KBIT]).sum()
    rlost = t[:, K.C_RLOST_KBIT].sum()
    dropped = t[:, K.C_DROP_KBIT].sum()
    queue = t[-1, K.C_QUEUE]
    assert recv <= sent
    assert sent == pytest.approx(recv + rlost + dropped + queue, abs=1e-3)  # kbit, i.e. 1 bit


def test_delay_is_base_exactly_when_queue_empty():
    log = run_call(generate_trace("stable_lbw", 4, 120.0), FixedPolicy(1), POOL, seed=1)
    t = log.ticks
    empty = t[:, K.C_QUEUE] == 0.0
    assert empty.any() and (~empty).any()
    assert np.all(t[empty, K.C_OWD] == t[empty, K.C_BASE])
    assert np.all(t[~empty, K.C_OWD] > t[~empty, K.C_BASE])


def test_shadow_estimators_see_the_same_stream():
    """Replaying a call's tick stream into a fresh estimator reproduces its logged estimates."""
    tr = generate_trace("lte", 6, 120.0)
    log = run_call(tr, RandomPolicy(2), POOL, seed=9)
    for j, est in enumerate(POOL):
        state = est.reset()
        for i, row in enumerate(log.ticks):
            obs = TickStats.from_row(row)
            state, e = est.update(state, obs)
            assert e == log.estimates[i, j]


def test_active_estimator_drives_sender():
    log = run_call(generate_trace("stable_hbw", 1, 120.0), FixedPolicy(2), POOL, seed=0)
    # tick i sends at the active estimate produced after tick i - 1
    send = log.ticks[1:, K.C_SEND]
    assert np.allclose(send, np.clip(log.estimates[:-1, 2], 10, 8000))


def test_video_delay_flag():
    cfg = SimConfig(video_delay=True)
    log = run_call(generate_trace("stable_hbw", 1, 120.0), FixedPolicy(0), POOL, cfg, seed=0)
    first = log.ticks[:200]
    assert first[:, K.C_VPKT].sum() == 0
    assert log.ticks[200:, K.C_VPKT].sum() > 0


def test_run_call_errors():
    tr = generate_trace("stable_hbw", 1, 120.0)
    with pytest.raises(ValueError, match="empty"):
        run_call(tr, FixedPolicy(0), [])
    with pytest.raises(ValueError, match="shorter"):
        run_call(generate_trace("stable_hbw", 1, 60.0), FixedPolicy(0), POOL)
    with pytest.raises(ValueError, match="outside pool"):
        run_call(tr, FixedPolicy(5), POOL)


def test_split_interval_records_window_actions():
    class Split(FixedPolicy):
        def decide(self, ctx):
            return [0] * 5 + [1] * 5

    log = run_call(generate_trace("stable_hbw", 1, 120.0), Split(0), POOL, seed=0)
    assert log.records[0].actions == (0,) * 5 + (1,) * 5
    assert log.records[0].action == 1


@pytest.mark.parametrize("interval,fresh", [(1.2, 2), (3.0, 5), (4.8, 8), (6.0, 10)])
def test_state_window_count_follows_interval(interval, fresh):
    cfg = SimConfig(decision_interval=interval)
    log = run_call(generate_trace("stable_hbw", 1, 120.0), FixedPolicy(0), POOL, cfg, seed=0)
    assert len(log.records) == int(round(120.0 / interval))
    s = log.records[3].state
    rates = s[:10]
    assert np.all(rates[:10 - fresh] == 0.0)
    assert np.all(rates[10 - fresh:] > 0.0)


def test_transitions_chain_states():
    log = run_call(generate_trace("lte", 1, 120.0), RandomPolicy(0), POOL, seed=2)
    ts = log.transitions("c1")
    assert len(ts) == 20
    assert [t.done for t in ts] == [False] * 19 + [True]
    for a, b in zip(ts, ts[1:]):
        assert a.next_state == b.state
    assert ts[-1].next_state == tuple(log.final_state)


@pytest.mark.skipif("cython" not in kernels.backends(), reason="compiled extension not built")
@pytest.mark.parametrize("regime", ["stable_lbw", "burst_hbw", "nonstationary"])
def test_backends_are_bit_identical(regime):
    tr = generate_trace(regime, 13, 120.0)
    digests = {}
    for name in ("python", "cython"):
        with kernels.use_backend(name):
            digests[name] = run_call(tr, RandomPolicy(3), POOL, seed=21).digest()
    assert digests["python"] == digests["cython"]


def test_binomial_inversion_matches_distribution():
    rng = np.random.default_rng(0)
    draws = [K.binomial_inv(40, 0.1, u) for u in rng.random(20000)]
    assert np.mean(draws) == pytest.approx(4.0, rel=0.03)
    assert np.var(draws) == pytest.approx(3.6, rel=0.08)
    assert K.binomial_inv(10, 0.0, 0.9) == 0
    assert K.binomial_inv(10, 1.0, 0.1) == 10


def test_constant_capacity_trace_fixture():
    tr = Trace("c", "stable_lbw", (TraceSegment(120.0, 500, 40, 0.0),), 0)
    log = run_call(tr, FixedPolicy(0), POOL, seed=0)
    assert log.ticks[:, K.C_RECV].max() <= 500.0 + 1e-9
