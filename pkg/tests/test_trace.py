import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metabwe.trace import (
    BURST_LOSS, EVAL_REGIMES, HBW_BAND, LBW_BAND, LTE_PHASE_BAND, QUIET_LOSS, REGIMES, Trace,
    TraceFormatError, TraceSegment, format_trace, generate_trace, load_trace, parse_trace,
    save_trace)


def test_stable_regime_is_one_segment():
    tr = generate_trace("stable_hbw", 7, 120.0)
    assert len(tr.segments) == 1
    assert tr.duration == pytest.approx(120.0)
    cap, _, _ = tr.per_tick(2000)
    assert np.all(cap == cap[0])


def test_nonstationary_phases_are_ordered():
    tr = generate_trace("nonstationary", 1, 120.0)
    cap, _, _ = tr.per_tick(2000)
    t = np.arange(2000) * 0.06
    lbw = cap[t < 40]
    lte = cap[(t >= 40) & (t < 80)]
    hbw = cap[t >= 80]
    assert lbw.max() < lte.min()
    assert lte.max() < hbw.min()
    assert LBW_BAND[0] <= lbw.min() and lbw.max() <= LBW_BAND[1]
    assert LTE_PHASE_BAND[0] <= lte.min() and lte.max() <= LTE_PHASE_BAND[1]
    assert HBW_BAND[0] <= hbw.min() and hbw.max() <= HBW_BAND[1]


def test_fluct_lbw_segments_stay_in_band():
    tr = generate_trace("fluct_lbw", 3, 120.0)
    assert len(tr.segments) > 1
    for s in tr.segments:
        assert 150.0 <= s.capacity <= 800.0


def test_generation_is_deterministic():
    a = format_trace(generate_trace("lte", 11, 120.0))
    b = format_trace(generate_trace("lte", 11, 120.0))
    assert a == b
    assert a != format_trace(generate_trace("lte", 12, 120.0))


@pytest.mark.parametrize("regime", REGIMES)
def test_round_trip(regime, tmp_path):
    tr = generate_trace(regime, 42, 120.0)
    path = tmp_path / "x.trace"
    save_trace(tr, path)
    assert load_trace(path) == tr


def test_negative_capacity_is_a_parse_error():
    text = format_trace(generate_trace("stable_lbw", 0, 10.0))
    lines = text.splitlines()
    lines[2] = "seg dur=10.0 cap=-5.0 owd=30.0 loss=0.0"
    with pytest.raises(TraceFormatError, match=r"line 3: field cap"):
        parse_trace("\n".join(lines))


def test_unknown_regime_is_a_parse_error():
    text = format_trace(generate_trace("stable_lbw", 0, 10.0)).replace("regime=stable_lbw",
                                                                       "regime=satellite")
    with pytest.raises(TraceFormatError, match="regime"):
        parse_trace(text)


def test_bad_magic_and_non_numeric_fields():
    with pytest.raises(TraceFormatError, match="line 1"):
        parse_trace("IVYTRACE v9\nid=a regime=lte seed=0\n")
    bad = "IVYTRACE v1\nid=a regime=lte seed=0\nseg dur=1 cap=abc owd=1 loss=0\n"
    with pytest.raises(TraceFormatError, match="field cap"):
        parse_trace(bad)
    with pytest.raises(TraceFormatError, match="segment"):
        parse_trace("IVYTRACE v1\nid=a regime=lte seed=0\n")


def test_unknown_regime_rejected_by_generator():
    with pytest.raises(ValueError, match="unknown regime"):
        generate_trace("wifi", 0, 120.0)
    with pytest.raises(ValueError):
        generate_trace("lte", 0, 0.0)


def test_segment_invariants():
    with pytest.raises(ValueError):
        TraceSegment(1.0, 0.0, 10.0, 0.0)
    with pytest.raises(ValueError):
        TraceSegment(1.0, 100.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        TraceSegment(1.0, 100.0, 10.0, 1.0)
    with pytest.raises(ValueError):
        TraceSegment(0.0, 100.0, 10.0, 0.0)


@settings(max_examples=1000, deadline=None)
@given(regime=st.sampled_from(REGIMES), seed=st.integers(0, 2**64 - 1))
def test_generated_segments_are_valid(regime, seed):
    tr = generate_trace(regime, seed, 120.0)
    assert tr.duration == pytest.approx(120.0)
    for s in tr.segments:
        assert s.duration > 0 and s.capacity > 0 and s.base_owd >= 0
        assert 0.0 <= s.random_loss < 1.0


@pytest.mark.parametrize("regime", [r for r in EVAL_REGIMES if r.startswith("burst")])
@pytest.mark.parametrize("seed", range(20))
def test_burst_regimes_have_bursts_and_quiet(regime, seed):
    losses = [s.random_loss for s in generate_trace(regime, seed, 120.0).segments]
    assert max(losses) >= BURST_LOSS[0]
    assert min(losses) <= QUIET_LOSS[1]


def test_short_burst_trace_still_alternates():
    losses = [s.random_loss for s in generate_trace("burst_lbw", 5, 3.0).segments]
    assert max(losses) >= 0.05 and min(losses) <= 0.01


def test_per_tick_lookup_crosses_segments():
    tr = Trace("t", "lte", (TraceSegment(0.12, 100, 10, 0.0), TraceSegment(1.0, 200, 20, 0.5)), 0)
    cap, owd, loss = tr.per_tick(4)
    assert cap.tolist() == [100.0, 100.0, 200.0, 200.0]
    assert owd.dtype == np.float64 and loss[-1] == 0.5
