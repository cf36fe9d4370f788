"""Tick-level call simulator.

A sender paces audio and video at the active estimator's rate through a
fluid bottleneck queue. Ticks are 60 ms; ten ticks form a 600 ms QoS window;
the metapolicy is consulted every decision interval.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py as K
from . import kernels, qoe
from .dataset import Transition
from .meta import DecisionContext, build_state

TICK_S = K.TICK_S
WINDOW_TICKS = 10
WINDOW_S = 0.6
INTERARRIVAL_CEILING_MS = 600.0
VIDEO_DELAY_S = 12.0


@dataclass(frozen=True)
class TickStats:
    t: float
    send_rate: float  # kbps
    recv_rate: float  # kbps
    owd: float  # ms
    lost_pkts: float
    video_pkts: float  # received
    audio_pkts: float  # received
    queue_bits: float  # kbit
    base_owd: float = 0.0  # ms, of the active segment
    sent_kbit: float = 0.0
    random_lost_kbit: float = 0.0
    dropped_kbit: float = 0.0
    video_recv_kbit: float = 0.0
    audio_recv_kbit: float = 0.0

    @classmethod
    def from_row(cls, row) -> "TickStats":
        return cls(*(float(v) for v in row[:K.NCOL]))


@dataclass(frozen=True)
class QosWindow:
    recv_rate: float  # kbps, mean over ticks
    lost_pkts: float  # sum
    owd: float  # ms, mean
    interarrival: float  # ms
    video_prop: float
    audio_prop: float
    # MOS inputs
    queuing_delay: float = 0.0  # ms, mean of owd - base_owd
    video_goodput: float = 0.0  # kbps
    audio_goodput: float = 0.0  # kbps
    received_pkts: float = 0.0

    @property
    def loss_rate(self) -> float:
        total = self.lost_pkts + self.received_pkts
        return self.lost_pkts / total if total > 0 else 0.0


class LinkState:
    """Bottleneck queue contents and packetization carries."""

    def __init__(self):
        self.values = np.zeros(K.NLINK)

    @property
    def queue(self) -> float:
        return float(self.values[K.L_QA] + self.values[K.L_QV])


def step_tick(link_state: LinkState, segment, send_rate: float, rng, video_on: bool = True,
              t: float = 0.0) -> TickStats:
    """Advance the link by one tick at ``send_rate`` (clipped to [10, 8000] kbps)."""
    row = np.zeros(K.NCOL)
    row[K.C_T] = t
    kernels.link_step(link_state.values, float(segment.capacity), float(segment.base_owd),
                      float(segment.random_loss), float(kernels.clip_rate(send_rate)),
                      bool(video_on), float(rng.random()), row)
    return TickStats.from_row(row)


def _window_from_rows(rows: np.ndarray) -> QosWindow:
    vpk = float(rows[:, K.C_VPKT].sum())
    apk = float(rows[:, K.C_APKT].sum())
    total = vpk + apk
    window_s = len(rows) * TICK_S
    return QosWindow(
        recv_rate=float(rows[:, K.C_RECV].mean()),
        lost_pkts=float(rows[:, K.C_LOST].sum()),
        owd=float(rows[:, K.C_OWD].mean()),
        interarrival=WINDOW_S * 1000.0 / total if total > 0 else INTERARRIVAL_CEILING_MS,
        video_prop=vpk / total if total > 0 else 0.0,
        audio_prop=apk / total if total > 0 else 0.0,
        queuing_delay=float((rows[:, K.C_OWD] - rows[:, K.C_BASE]).mean()),
        video_goodput=float(rows[:, K.C_VRECV_KBIT].sum()) / window_s,
        audio_goodput=float(rows[:, K.C_ARECV_KBIT].sum()) / window_s,
        received_pkts=total,
    )


def aggregate_window(ticks) -> QosWindow:
    """Aggregate exactly 10 :class:`TickStats` into one QoS window."""
    ticks = list(ticks)
    if len(ticks) != WINDOW_TICKS:
        raise ValueError(f"a window needs exactly {WINDOW_TICKS} ticks, got {len(ticks)}")
    rows = np.array([[getattr(tk, f) for f in TickStats.__dataclass_fields__] for tk in ticks])
    return _window_from_rows(rows)


def window_mos(w: QosWindow, params: qoe.QoeParams = qoe.DEFAULT_QOE) -> qoe.MosScore:
    return qoe.score(w.video_goodput, w.audio_goodput, w.queuing_delay, w.loss_rate, params)


@dataclass(frozen=True)
class SimConfig:
    call_duration: float = 120.0  # s
    decision_interval: float = 6.0  # s
    video_delay: bool = False  # hold video until 12 s into the call
    qoe: qoe.QoeParams = qoe.DEFAULT_QOE

    @property
    def windows_per_interval(self) -> int:
        return windows_per_interval(self.decision_interval)

    @property
    def n_ticks(self) -> int:
        return int(round(self.call_duration / TICK_S))


def windows_per_interval(interval: float) -> int:
    n = int(round(interval / WINDOW_S))
    if n < 1 or abs(n * WINDOW_S - interval) > 1e-9:
        raise ValueError(f"decision interval {interval} s is not a multiple of {WINDOW_S} s")
    return n


def call_seed(master_seed: int, *keys: int) -> int:
    """Derive a 64-bit call seed from a master seed and integer keys."""
    ss = np.random.SeedSequence([master_seed, *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class IntervalRecord:
    state: np.ndarray
    action: int
    video_mos: float
    audio_mos: float
    estimates: np.ndarray  # each estimator's output at the decision point
    actions: tuple = ()  # per-window actions when the policy split the interval


@dataclass
class CallLog:
    trace_id: str
    policy_name: str
    seed: int
    pool_names: tuple
    records: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    windows: list = field(default_factory=list)
    window_mos: list = field(default_factory=list)
    ticks: np.ndarray | None = None  # n_ticks x NCOL
    estimates: np.ndarray | None = None  # n_ticks x pool size

    @property
    def actions(self) -> list[int]:
        return [r.action for r in self.records]

    @property
    def mean_video_mos(self) -> float:
        return float(np.mean([m.video_mos for m in self.window_mos]))

    @property
    def mean_audio_mos(self) -> float:
        return float(np.mean([m.audio_mos for m in self.window_mos]))

    def transitions(self, call_id: str | None = None) -> list[Transition]:
        cid = call_id if call_id is not None else self.trace_id
        out = []
        n = len(self.records)
        for k, rec in enumerate(self.records):
            nxt = self.records[k + 1].state if k + 1 < n else self.final_state
            out.append(Transition(
                state=tuple(float(x) for x in rec.state),
                action=int(rec.action),
                reward=float(rec.video_mos),
                next_state=tuple(float(x) for x in nxt),
                done=k == n - 1,
                call_id=cid,
                estimates=tuple(float(x) for x in rec.estimates),
            ))
        return out

    def digest(self) -> str:
        """SHA-256 over every logged value; equal digests mean identical logs."""
        h = hashlib.sha256()
        h.update(f"{self.trace_id}|{self.policy_name}|{self.seed}|{self.pool_names}".encode())
        for r in self.records:
            h.update(np.asarray(r.state, dtype=np.float64).tobytes())
            h.update(repr((r.action, r.video_mos, r.audio_mos, r.actions)).encode())
            h.update(np.asarray(r.estimates, dtype=np.float64).tobytes())
        if self.final_state is not None:
            h.update(np.asarray(self.final_state, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.ticks).tobytes())
        h.update(np.ascontiguousarray(self.estimates).tobytes())
        return h.hexdigest()


def _as_window_actions(decision, n: int, pool_size: int) -> list[int]:
    if isinstance(decision, (int, np.integer)):
        acts = [int(decision)] * n
    else:
        acts = [int(a) for a in decision]
        if len(acts) != n:
            raise ValueError(f"policy returned {len(acts)} window actions, expected {n}")
    for a in acts:
        if not 0 <= a < pool_size:
            raise ValueError(f"action {a} outside pool of {pool_size}")
    return acts


def run_call(trace, metapolicy, estimator_pool, config: SimConfig = SimConfig(),
             seed: int = 0) -> CallLog:
    """Simulate one call over ``trace`` with ``metapolicy`` choosing among the pool."""
    pool = list(estimator_pool)
    if not pool:
        raise ValueError("estimator pool is empty")
    if len(pool) < 2:
        raise ValueError("estimator pool needs at least two estimators")
    if trace.duration + 1e-9 < config.call_duration:
        raise ValueError(f"trace {trace.id} lasts {trace.duration} s, shorter than the "
                         f"{config.call_duration} s call")
    wpi = config.windows_per_interval
    n_ticks = config.n_ticks
    n_windows = n_ticks // WINDOW_TICKS
    n_decisions = n_windows // wpi
    n_ticks = n_decisions * wpi * WINDOW_TICKS

    rng = np.random.default_rng(seed)
    unif = rng.random(n_ticks)
    cap, owd, loss = trace.per_tick(n_ticks, TICK_S)
    kinds = np.array([e.kind_code for e in pool], dtype=np.int64)
    params = np.array([e.param_vector() for e in pool], dtype=np.float64)
    states = np.array([e.reset() for e in pool], dtype=np.float64)
    link = np.zeros(K.NLINK)
    ticks = np.zeros((n_ticks, K.NCOL))
    est = np.zeros((n_ticks, len(pool)))
    video_start = int(round(VIDEO_DELAY_S / TICK_S)) if config.video_delay else 0
    names = tuple(e.name for e in pool)

    metapolicy.reset(names, seed)
    log = CallLog(trace_id=trace.id, policy_name=metapolicy.name, seed=seed, pool_names=names,
                  ticks=ticks, estimates=est)
    actions: list[int] = []
    t0 = 0
    for k in range(n_decisions):
        recent = log.windows[-wpi:] if k > 0 else []
        state = build_state(recent, actions, len(pool))
        cur = states[:, K.S_EST].copy()
        ctx = DecisionContext(index=k, state=state, windows=log.windows, estimates=cur,
                              actions=actions, pool_names=names, windows_per_interval=wpi)
        wacts = _as_window_actions(metapolicy.decide(ctx), wpi, len(pool))
        v = a = 0.0
        for wa in wacts:
            kernels.run_ticks(t0, WINDOW_TICKS, cap, owd, loss, unif, link, wa, kinds, params,
                              states, video_start, ticks, est)
            w = _window_from_rows(ticks[t0:t0 + WINDOW_TICKS])
            m = window_mos(w, config.qoe)
            log.windows.append(w)
            log.window_mos.append(m)
            v += m.video_mos
            a += m.audio_mos
            t0 += WINDOW_TICKS
        action = wacts[-1]
        actions.append(action)
        log.records.append(IntervalRecord(
            state=state, action=action, video_mos=v / wpi, audio_mos=a / wpi, estimates=cur,
            actions=tuple(wacts) if len(set(wacts)) > 1 else ()))
    log.final_state = build_state(log.windows[-wpi:], actions, len(pool))
    return log
