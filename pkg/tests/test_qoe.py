import math

import pytest
from hypothesis import given, strategies as st

from metabwe.qoe import DEFAULT_QOE, QoeParams, audio_mos, score, video_mos


def test_reference_points():
    # log(21) / log(83 / 3) = 0.916961
    assert video_mos(6000.0, 0.0, 0.0) == pytest.approx(4.66785, abs=1e-4)
    assert video_mos(8000.0, 0.0, 0.0) == pytest.approx(5.0)
    assert video_mos(0.0, 0.0, 0.0) == 1.0
    assert audio_mos(40.0, 0.0, 0.0) == pytest.approx(4.6)
    assert audio_mos(0.0, 0.0, 0.0) == 1.0


def test_delay_and_loss_terms():
    full = video_mos(8000.0, 0.0, 0.0)
    assert video_mos(8000.0, 250.0, 0.0) == pytest.approx(1 + 4 * math.exp(-1))
    assert video_mos(8000.0, 0.0, 0.1) == pytest.approx(1 + 4 * 0.9 ** 8)
    assert audio_mos(40.0, 400.0, 0.0) == pytest.approx(1 + 3.6 * math.exp(-1))
    assert video_mos(8000.0, -5.0, -0.1) == full  # negative inputs clamp


def test_params_override():
    p = QoeParams(video_max_rate=4000.0)
    assert video_mos(4000.0, 0.0, 0.0, p) == pytest.approx(5.0)
    assert score(100.0, 20.0, 10.0, 0.01, DEFAULT_QOE).video_mos == video_mos(100.0, 10.0, 0.01)


rates = st.floats(0.0, 20000.0)
delays = st.floats(0.0, 2000.0)
losses = st.floats(0.0, 1.0)


@given(rates, rates, delays, losses)
def test_video_monotone_in_goodput(g1, g2, qd, loss):
    lo, hi = sorted((g1, g2))
    assert video_mos(lo, qd, loss) <= video_mos(hi, qd, loss)


@given(rates, delays, delays, losses)
def test_monotone_in_delay(g, d1, d2, loss):
    lo, hi = sorted((d1, d2))
    assert video_mos(g, hi, loss) <= video_mos(g, lo, loss)
    assert audio_mos(g, hi, loss) <= audio_mos(g, lo, loss)


@given(rates, delays, losses, losses)
def test_monotone_in_loss_and_bounded(g, qd, l1, l2):
    lo, hi = sorted((l1, l2))
    assert video_mos(g, qd, hi) <= video_mos(g, qd, lo)
    for m in (video_mos(g, qd, lo), audio_mos(g, qd, lo)):
        assert 1.0 <= m <= 5.0
