"""Bandwidth estimator pool.

Three hand-designed estimators with complementary strengths:

``safe_filter``
    Delay-sensitive. Additive probe of +20 kbps per tick, multiplicative
    backoff when queuing delay passes 30 ms, and a hard 1.5 Mbps ceiling.
    Good on small or unstable links and leaves high-capacity links
    underused.
``probe_max``
    Aggressive multiplicative probe. Backs off only on loss above 2% or
    queuing delay above 150 ms. Fills fast links and overloads slow ones.
``loss_tolerant``
    Multiplicative probe with a 120 kbps minimum step. Ignores loss unless
    the delay is also growing. Rides through random-loss bursts and cellular-style
    fluctuation. It reacts late, so it builds queues on slow links.

Every estimator observes every 60 ms tick (shadow mode), whether or not it is
driving the sender. Updates are deterministic and clipped to [10, 8000] kbps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py as K
from . import kernels

INITIAL_ESTIMATE = 300.0

KINDS = {
    "safe_filter": K.SAFE_FILTER,
    "probe_max": K.PROBE_MAX,
    "loss_tolerant": K.LOSS_TOLERANT,
}

# parameter names in kernel slot order
PARAM_NAMES = {
    "safe_filter": ("add_step", "backoff", "qd_thresh", "cap", "grad_thresh", "headroom",
                    "hold_ticks", "loss_thresh"),
    "probe_max": ("probe", "headroom", "qd_thresh", "loss_thresh", "backoff", "hold_ticks",
                  "cap", "peak_floor"),
    "loss_tolerant": ("probe", "headroom", "qd_thresh", "backoff", "min_step", "hold_ticks",
                      "persist_ticks", "loss_thresh"),
}

DEFAULT_PARAMS = {
    "safe_filter": dict(add_step=20.0, backoff=0.85, qd_thresh=30.0, cap=1500.0,
                        grad_thresh=1.0, headroom=1.5, hold_ticks=5.0, loss_thresh=0.1),
    "probe_max": dict(probe=1.08, headroom=1.25, qd_thresh=150.0, loss_thresh=0.02,
                      backoff=0.7, hold_ticks=3.0, cap=8000.0, peak_floor=0.5),
    "loss_tolerant": dict(probe=1.06, headroom=1.15, qd_thresh=25.0, backoff=0.85,
                          min_step=120.0, hold_ticks=3.0, persist_ticks=3.0, loss_thresh=0.02),
}


@dataclass(frozen=True)
class Estimator:
    """One pool member: a kind plus its constants. States are plain float arrays."""

    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of "
                             f"{', '.join(KINDS)}")
        unknown = set(self.params) - set(PARAM_NAMES[self.kind])
        if unknown:
            raise ValueError(f"unknown {self.kind} parameter(s): {', '.join(sorted(unknown))}")

    @property
    def kind_code(self) -> int:
        return KINDS[self.kind]

    def param_vector(self) -> np.ndarray:
        merged = {**DEFAULT_PARAMS[self.kind], **self.params}
        return np.array([merged[k] for k in PARAM_NAMES[self.kind]], dtype=np.float64)

    def reset(self) -> np.ndarray:
        state = np.zeros(K.NSTATE)
        state[K.S_EST] = INITIAL_ESTIMATE
        return state

    def update(self, state: np.ndarray, obs) -> tuple[np.ndarray, float]:
        """Return ``(new_state, estimate)`` after observing one tick; ``state`` is untouched."""
        new = np.array(state, dtype=np.float64, copy=True)
        est = kernels.estimator_step(self.kind_code, self.param_vector(), new,
                                     float(obs.recv_rate), float(obs.owd),
                                     float(obs.lost_pkts), float(obs.video_pkts),
                                     float(obs.audio_pkts))
        return new, float(est)

    @staticmethod
    def estimate(state: np.ndarray) -> float:
        return float(state[K.S_EST])


def make_estimator(name: str, **params) -> Estimator:
    """Build a built-in estimator by config name, optionally overriding constants."""
    if name not in KINDS:
        raise ValueError(f"unknown estimator {name!r}; expected one of {', '.join(KINDS)}")
    return Estimator(name=name, kind=name, params=params)


def make_pool(names, overrides: dict | None = None) -> list[Estimator]:
    """Pool from config names. ``overrides`` maps name -> {param: value}."""
    names = list(names)
    if not names:
        raise ValueError("estimator pool is empty")
    if len(set(names)) != len(names):
        raise ValueError("estimator names in a pool must be unique")
    overrides = overrides or {}
    return [make_estimator(n, **overrides.get(n, {})) for n in names]


DEFAULT_POOL = ("safe_filter", "probe_max", "loss_tolerant")
