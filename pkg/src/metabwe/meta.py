"""Metapolicy layer: state construction, QoS utilities and baseline policies.

A metapolicy is consulted once per decision interval and names the estimator
that drives the sender for that interval. It may also return one action per
600 ms window, which the exploration-exploitation baseline uses to split its
exploration interval.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

N_WINDOWS = 10
N_ACTIONS = 5
STATE_DIM = 6 * N_WINDOWS + N_ACTIONS

RATE_NORM = 8000.0  # kbps
LOST_NORM = 100.0  # packets per window
OWD_NORM = 1000.0  # ms
INTERARRIVAL_NORM = 100.0  # ms

JITTER_THRESHOLD_MS = 25.0

# vivace defaults
VIVACE_EXPONENT = 0.9
VIVACE_BETA = 0.009
VIVACE_GAMMA = 11.35

SAFE = "safe_filter"
PROBE = "probe_max"


def _clamp01(x: float) -> float:
    if not math.isfinite(x):
        return 0.0
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def build_state(windows: Sequence, past_actions: Sequence[int], pool_size: int) -> np.ndarray:
    """Normalized 65-float state from the latest windows and actions (newest last).

    Missing history is zero-padded at the oldest positions.
    """
    if pool_size < 2:
        raise ValueError("pool_size must be >= 2")
    s = np.zeros(STATE_DIM)
    windows = list(windows)[-N_WINDOWS:]
    off = N_WINDOWS - len(windows)
    for i, w in enumerate(windows):
        j = off + i
        s[j] = _clamp01(w.recv_rate / RATE_NORM)
        s[N_WINDOWS + j] = _clamp01(w.lost_pkts / LOST_NORM)
        s[2 * N_WINDOWS + j] = _clamp01(w.owd / OWD_NORM)
        s[3 * N_WINDOWS + j] = _clamp01(w.interarrival / INTERARRIVAL_NORM)
        s[4 * N_WINDOWS + j] = _clamp01(w.video_prop)
        s[5 * N_WINDOWS + j] = _clamp01(w.audio_prop)
    acts = list(past_actions)[-N_ACTIONS:]
    off = N_ACTIONS - len(acts)
    for i, a in enumerate(acts):
        s[6 * N_WINDOWS + off + i] = a / (pool_size - 1)
    return s


# -- QoS utilities ---------------------------------------------------------

def vivace_utility(rate: float, drtt_dt: float, loss: float, *, exponent: float = VIVACE_EXPONENT,
                   beta: float = VIVACE_BETA, gamma: float = VIVACE_GAMMA) -> float:
    if rate < 0:
        raise ValueError("rate must be >= 0")
    return rate ** exponent - beta * rate * max(0.0, drtt_dt) - gamma * loss * rate


def power(rate: float, delay: float) -> float:
    if not delay > 0:
        raise ValueError(f"delay must be > 0, got {delay}")
    return rate / delay


def power_variant(rate: float, loss: float, delay: float) -> float:
    if not delay > 0:
        raise ValueError(f"delay must be > 0, got {delay}")
    return rate * (1.0 - loss) / delay


def throughput(rate: float) -> float:
    return rate


@dataclass(frozen=True)
class MiniWindowStats:
    rate: float  # kbps, mean receive rate
    delay: float  # ms, mean owd
    loss: float  # fraction of packets lost
    drtt_dt: float  # ms per s, least-squares owd slope


def mini_window_stats(windows: Sequence, window_s: float = 0.6) -> MiniWindowStats:
    rate = float(np.mean([w.recv_rate for w in windows]))
    owd = np.array([w.owd for w in windows], dtype=float)
    lost = sum(w.lost_pkts for w in windows)
    recv = sum(w.received_pkts for w in windows)
    loss = lost / (lost + recv) if lost + recv > 0 else 0.0
    if len(owd) >= 2:
        t = np.arange(len(owd)) * window_s
        slope = float(np.polyfit(t, owd, 1)[0])
    else:
        slope = 0.0
    return MiniWindowStats(rate, float(owd.mean()), loss, slope)


UTILITIES = {
    "vivace": lambda m: vivace_utility(m.rate, m.drtt_dt, m.loss),
    "power": lambda m: power(m.rate, m.delay),
    "power_variant": lambda m: power_variant(m.rate, m.loss, m.delay),
    "throughput": lambda m: throughput(m.rate),
}


# -- policies --------------------------------------------------------------

@dataclass
class DecisionContext:
    """What a metapolicy sees at a decision boundary."""

    index: int  # decision number, 0-based
    state: np.ndarray
    windows: list  # every QosWindow of the call so far, oldest first
    estimates: np.ndarray  # current estimate of each pool member, kbps
    actions: list  # actions taken so far
    pool_names: tuple
    windows_per_interval: int


class Metapolicy:
    """Base class. ``decide`` returns an action index, or one index per window."""

    name = "policy"

    def reset(self, pool_names: Sequence[str], call_seed: int) -> None:
        self.pool_names = tuple(pool_names)

    def decide(self, ctx: DecisionContext):
        raise NotImplementedError

    def _index(self, name: str) -> int:
        try:
            return self.pool_names.index(name)
        except ValueError:
            raise ValueError(f"{self.name} needs estimator {name!r} in the pool") from None


class FixedPolicy(Metapolicy):
    def __init__(self, index: int, name: str | None = None):
        if index < 0:
            raise ValueError("index must be >= 0")
        self.index = index
        self.name = name or f"fixed_{index}"

    def reset(self, pool_names, call_seed):
        super().reset(pool_names, call_seed)
        if self.index >= len(self.pool_names):
            raise ValueError(f"fixed index {self.index} outside pool of {len(self.pool_names)}")

    def decide(self, ctx):
        return self.index


class RandomPolicy(Metapolicy):
    """Uniform over the pool, i.i.d. per decision; seeded by (seed, call_seed)."""

    def __init__(self, seed: int = 0, name: str = "random"):
        self.seed = seed
        self.name = name
        self._rng = np.random.default_rng(seed)

    def reset(self, pool_names, call_seed):
        super().reset(pool_names, call_seed)
        self._rng = np.random.default_rng([self.seed, call_seed])

    def decide(self, ctx):
        return int(self._rng.integers(len(self.pool_names)))

    def draws(self, n: int, pool_size: int) -> list[int]:
        return [int(a) for a in self._rng.integers(pool_size, size=n)]


class ExploreExploitPolicy(Metapolicy):
    """One exploration episode at the third decision interval, then commit.

    Decisions 1-2 run the conservative estimator. Interval 3 runs it for the
    first half and the aggressive one for the second half; each half is scored
    with a QoS utility and the argmax runs for the rest of the call (ties keep
    the conservative estimator).
    """

    def __init__(self, utility: str, name: str | None = None):
        if utility not in UTILITIES:
            raise ValueError(f"unknown utility {utility!r}; expected one of {', '.join(UTILITIES)}")
        self.utility = utility
        self.name = name or f"explore_{utility}"
        self.committed = None
        self.scores = None

    def reset(self, pool_names, call_seed):
        super().reset(pool_names, call_seed)
        self.committed = None
        self.scores = None

    def decide(self, ctx):
        safe, probe = self._index(SAFE), self._index(PROBE)
        if ctx.index < 2:
            return safe
        if ctx.index == 2:
            half = ctx.windows_per_interval // 2
            return [safe] * half + [probe] * (ctx.windows_per_interval - half)
        if self.committed is None:
            n = ctx.windows_per_interval
            half = n // 2
            last = ctx.windows[-n:]
            fn = UTILITIES[self.utility]
            u_safe = fn(mini_window_stats(last[:half]))
            u_probe = fn(mini_window_stats(last[half:]))
            self.scores = (u_safe, u_probe)
            self.committed = probe if u_probe > u_safe else safe
        return self.committed


def owd_jitter(windows: Sequence, n: int = N_WINDOWS) -> float:
    """Population std of the per-window mean owd over the last ``n`` windows."""
    recent = list(windows)[-n:]
    if len(recent) < 2:
        return 0.0
    return float(np.std([w.owd for w in recent]))


class RulePolicy(Metapolicy):
    """Fall back to the conservative estimator when the network looks unstable."""

    KINDS = ("jitter", "delta", "all_rules")

    def __init__(self, kind: str, sigma: float | None = None,
                 jitter_threshold: float = JITTER_THRESHOLD_MS, name: str | None = None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown rule kind {kind!r}")
        if kind != "jitter" and not (sigma is not None and sigma > 0):
            raise ValueError(f"{kind} rule needs sigma > 0")
        self.kind = kind
        self.sigma = sigma
        self.jitter_threshold = jitter_threshold
        self.name = name or kind

    def jitter_fires(self, windows) -> bool:
        return owd_jitter(windows) > self.jitter_threshold

    def delta_fires(self, estimates, safe: int, probe: int) -> bool:
        return abs(estimates[safe] - estimates[probe]) > self.sigma

    def decide(self, ctx):
        safe, probe = self._index(SAFE), self._index(PROBE)
        fire = False
        if self.kind in ("jitter", "all_rules"):
            fire = self.jitter_fires(ctx.windows)
        if self.kind in ("delta", "all_rules"):
            fire = fire or self.delta_fires(ctx.estimates, safe, probe)
        return safe if fire else probe


def random_policy(seed: int) -> RandomPolicy:
    return RandomPolicy(seed)


def fixed_policy(index: int) -> FixedPolicy:
    return FixedPolicy(index)


def explore_exploit_policy(utility_name: str) -> ExploreExploitPolicy:
    return ExploreExploitPolicy(utility_name)


def rule_policy(kind: str, sigma: float | None = None) -> RulePolicy:
    return RulePolicy(kind, sigma)


# -- dataset statistics ----------------------------------------------------

@dataclass
class DatasetStats:
    n: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    reward_mean: float
    reward_std: float
    action_counts: list
    gap_mean: float
    sigma: float  # std of |safe_filter - probe_max| estimate gap
    warnings: list = field(default_factory=list)


def dataset_stats(dataset) -> DatasetStats:
    """Order-independent summary of a transition dataset.

    ``sigma`` (population std of the estimate gap) is the delta rule's threshold.
    """
    transitions = list(dataset.transitions)
    if not transitions:
        raise ValueError("dataset is empty")
    # sort so the floating-point sums do not depend on record order
    order = sorted(range(len(transitions)), key=lambda i: _record_key(transitions[i]))
    transitions = [transitions[i] for i in order]
    states = np.array([t.state for t in transitions])
    rewards = np.array([t.reward for t in transitions])
    counts = [0] * dataset.pool_size
    for t in transitions:
        counts[t.action] += 1
    warnings = []
    names = list(dataset.pool_names) if dataset.pool_names else []
    if SAFE in names and PROBE in names and all(t.estimates is not None for t in transitions):
        i, j = names.index(SAFE), names.index(PROBE)
        gaps = np.array([abs(t.estimates[i] - t.estimates[j]) for t in transitions])
        gap_mean = float(gaps.mean())
        sigma = float(gaps.std())
        if sigma == 0.0:
            warnings.append("degenerate sigma: estimate gap has zero variance")
    else:
        gap_mean = float("nan")
        sigma = float("nan")
        warnings.append("no safe_filter/probe_max estimates in dataset; sigma undefined")
    for w in warnings:
        log.warning(w)
    return DatasetStats(
        n=len(transitions),
        feature_mean=states.mean(axis=0),
        feature_std=states.std(axis=0),
        reward_mean=float(rewards.mean()),
        reward_std=float(rewards.std()),
        action_counts=counts,
        gap_mean=gap_mean,
        sigma=sigma,
        warnings=warnings,
    )


def _record_key(t):
    est = tuple(t.estimates) if t.estimates is not None else ()
    return (t.call_id, tuple(t.state), t.action, t.reward, tuple(t.next_state), t.done, est)
