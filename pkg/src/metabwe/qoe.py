"""Deterministic QoE proxy: per-window video and audio MOS on a 1-5 scale.

Scores depend on goodput, queuing delay (owd above the link's base delay) and
packet loss. Constants are calibration choices and can be overridden through
:class:`QoeParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class QoeParams:
    video_half_rate: float = 300.0  # kbps
    video_max_rate: float = 8000.0  # kbps
    video_delay_scale: float = 250.0  # ms
    video_loss_exp: float = 8.0
    audio_rate: float = 40.0  # kbps
    audio_delay_scale: float = 400.0  # ms
    audio_loss_exp: float = 4.0


DEFAULT_QOE = QoeParams()


@dataclass(frozen=True)
class MosScore:
    video_mos: float
    audio_mos: float


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def video_mos(video_goodput: float, queuing_delay: float, loss: float,
              params: QoeParams = DEFAULT_QOE) -> float:
    g = max(video_goodput, 0.0)
    rate = _clamp01(math.log1p(g / params.video_half_rate)
                    / math.log1p(params.video_max_rate / params.video_half_rate))
    delay = math.exp(-max(queuing_delay, 0.0) / params.video_delay_scale)
    lossf = (1.0 - _clamp01(loss)) ** params.video_loss_exp
    return 1.0 + 4.0 * rate * delay * lossf


def audio_mos(audio_goodput: float, queuing_delay: float, loss: float,
              params: QoeParams = DEFAULT_QOE) -> float:
    rate = _clamp01(audio_goodput / params.audio_rate)
    delay = math.exp(-max(queuing_delay, 0.0) / params.audio_delay_scale)
    lossf = (1.0 - _clamp01(loss)) ** params.audio_loss_exp
    return 1.0 + 3.6 * rate * delay * lossf


def score(video_goodput: float, audio_goodput: float, queuing_delay: float, loss: float,
          params: QoeParams = DEFAULT_QOE) -> MosScore:
    return MosScore(video_mos(video_goodput, queuing_delay, loss, params),
                    audio_mos(audio_goodput, queuing_delay, loss, params))
