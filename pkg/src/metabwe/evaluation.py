"""Offline collection and paired A/B evaluation.

Every policy in an A/B run sees the same (trace, simulator seed) schedule:
call ``i`` of regime ``g`` uses the same trace and seed for every policy.
Results are keyed by (policy, regime, call) and reduced in sorted order, so
reports do not depend on worker completion order.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .dataset import Dataset
from .meta import RandomPolicy
from .sim import SimConfig, call_seed, run_call, windows_per_interval
from .trace import EVAL_REGIMES, REGIMES, generate_trace

log = logging.getLogger(__name__)

COLLECT_REGIMES = EVAL_REGIMES + ("lte",)

# seed-stream tags so collection and evaluation never share traces
_COLLECT = 1
_EVAL_TRACE = 2
_EVAL_SIM = 3


def collection_call(master_seed: int, i: int, regimes, duration: float):
    """Regime, trace and simulator seed for offline collection call ``i``."""
    rng = np.random.default_rng([master_seed, _COLLECT, i])
    regime = regimes[int(rng.integers(len(regimes)))]
    tseed = call_seed(master_seed, _COLLECT, i, 0)
    sseed = call_seed(master_seed, _COLLECT, i, 1)
    return regime, generate_trace(regime, tseed, duration), sseed


def _collect_one(args):
    i, master_seed, regimes, pool, config = args
    regime, trace, sseed = collection_call(master_seed, i, regimes, config.call_duration)
    logd = run_call(trace, RandomPolicy(master_seed), pool, config, sseed)
    return i, logd.transitions(call_id=f"c{i:05d}-{regime}")


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (8 * workers))))


def collect(n_calls: int, master_seed: int, pool, config: SimConfig = SimConfig(),
            regimes=COLLECT_REGIMES, workers: int = 1) -> Dataset:
    """Run ``n_calls`` random-policy calls over sampled regimes and log every transition."""
    if n_calls < 1:
        raise ValueError("n_calls must be >= 1")
    regimes = tuple(regimes)
    jobs = [(i, master_seed, regimes, pool, config) for i in range(n_calls)]
    results = sorted(_map(_collect_one, jobs, workers), key=lambda x: x[0])
    ds = Dataset(pool_size=len(pool), interval=config.decision_interval,
                 pool_names=tuple(e.name for e in pool))
    for _, ts in results:
        ds.transitions.extend(ts)
    return ds


@dataclass
class ReportRow:
    policy: str
    regime: str
    n: int
    video_mos: float
    video_ci: float
    audio_mos: float
    audio_ci: float
    p_video: float
    p_audio: float


@dataclass
class CallRow:
    policy: str
    regime: str
    call: int
    trace_id: str
    seed: int
    video_mos: float
    audio_mos: float
    actions: tuple


@dataclass
class Report:
    reference: str
    policies: list
    regimes: list
    rows: list = field(default_factory=list)
    calls: list = field(default_factory=list)

    def row(self, policy: str, regime: str) -> ReportRow:
        for r in self.rows:
            if r.policy == policy and r.regime == regime:
                return r
        raise KeyError((policy, regime))

    def samples(self, policy: str, regime: str, metric: str = "video_mos") -> list[float]:
        return [getattr(c, metric) for c in self.calls
                if c.policy == policy and c.regime == regime]

    def mean(self, policy: str, regimes=None, metric: str = "video_mos") -> float:
        """Mean over the per-regime means."""
        regimes = regimes or self.regimes
        return float(np.mean([getattr(self.row(policy, g), metric) for g in regimes]))

    def table_csv(self) -> str:
        out = io.StringIO()
        out.write("policy,regime,n,video_mos,video_ci,audio_mos,audio_ci,p_video,p_audio\n")
        for r in self.rows:
            out.write(f"{r.policy},{r.regime},{r.n},{r.video_mos:.6f},{r.video_ci:.6f},"
                      f"{r.audio_mos:.6f},{r.audio_ci:.6f},{r.p_video:.6g},{r.p_audio:.6g}\n")
        return out.getvalue()

    def audit_csv(self) -> str:
        out = io.StringIO()
        out.write("policy,regime,call,trace_id,seed,video_mos,audio_mos,actions\n")
        for c in self.calls:
            acts = " ".join(str(a) for a in c.actions)
            out.write(f"{c.policy},{c.regime},{c.call},{c.trace_id},{c.seed},"
                      f"{c.video_mos!r},{c.audio_mos!r},{acts}\n")
        return out.getvalue()

    def timelines_csv(self, policy: str | None = None) -> str:
        out = io.StringIO()
        out.write("call_id,interval_index,action\n")
        for c in self.calls:
            if policy is not None and c.policy != policy:
                continue
            cid = f"{c.policy}/{c.regime}/{c.call}"
            for k, a in enumerate(c.actions):
                out.write(f"{cid},{k},{a}\n")
        return out.getvalue()


def _ab_one(args):
    p_idx, policy, g_idx, regime, i, trace, sseed, pool, config = args
    logd = run_call(trace, policy, pool, config, sseed)
    return (p_idx, g_idx, i), CallRow(
        policy=policy.name, regime=regime, call=i, trace_id=trace.id, seed=sseed,
        video_mos=logd.mean_video_mos, audio_mos=logd.mean_audio_mos,
        actions=tuple(logd.actions))


def _schedule(trace_set, calls_per_policy, master_seed, duration, arm=()):
    """Normalize to ``{regime: [(trace, sim seed), ...]}``.

    ``arm`` is empty for the paired design (one schedule shared by every
    policy); the unpaired design passes the policy index so each arm draws
    its own traces and seeds.
    """
    out = {}
    if isinstance(trace_set, dict):
        for regime, traces in trace_set.items():
            traces = list(traces)[:calls_per_policy]
            out[regime] = [(t, call_seed(master_seed, _EVAL_SIM, REGIMES.index(t.regime), i, *arm))
                           for i, t in enumerate(traces)]
        return out
    for regime in trace_set:
        g = REGIMES.index(regime)
        out[regime] = [
            (generate_trace(regime, call_seed(master_seed, _EVAL_TRACE, g, i, *arm), duration),
             call_seed(master_seed, _EVAL_SIM, g, i, *arm))
            for i in range(calls_per_policy)]
    return out


def run_ab(policies, trace_set=EVAL_REGIMES, calls_per_policy: int = 50, master_seed: int = 0,
           pool=None, config: SimConfig = SimConfig(), reference: str | None = None,
           workers: int = 1, paired: bool = True) -> Report:
    """Evaluate ``policies`` over a regime list (or ``{regime: [Trace]}``).

    p-values are Welch tests of each policy against ``reference`` (default: the
    first policy) within each regime. With ``paired=False`` every policy gets
    its own simulator seeds and, for generated traces, its own traces.
    """
    from .bwe import DEFAULT_POOL, make_pool

    policies = list(policies)
    if not policies:
        raise ValueError("no policies to evaluate")
    if calls_per_policy < 2:
        raise ValueError("calls_per_policy must be >= 2")
    if not trace_set:
        raise ValueError("trace set is empty")
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ValueError("policy names must be unique")
    pool = pool if pool is not None else make_pool(DEFAULT_POOL)
    reference = reference or names[0]
    if reference not in names:
        raise ValueError(f"reference policy {reference!r} is not being evaluated")
    for regime in (trace_set if not isinstance(trace_set, dict) else ()):
        if regime not in REGIMES:
            raise ValueError(f"unknown regime {regime!r}")
    shared = _schedule(trace_set, calls_per_policy, master_seed, config.call_duration)
    regimes = list(shared)
    jobs = []
    for p_idx, pol in enumerate(policies):
        sched = shared if paired else _schedule(trace_set, calls_per_policy, master_seed,
                                                config.call_duration, (p_idx + 1,))
        for g_idx, regime in enumerate(regimes):
            for i, (trace, sseed) in enumerate(sched[regime]):
                jobs.append((p_idx, pol, g_idx, regime, i, trace, sseed, pool, config))
    results = dict(_map(_ab_one, jobs, workers))
    calls = [results[k] for k in sorted(results)]

    report = Report(reference=reference, policies=names, regimes=regimes, calls=calls)
    for pol in names:
        for regime in regimes:
            v = report.samples(pol, regime, "video_mos")
            a = report.samples(pol, regime, "audio_mos")
            if len(v) < 2:
                raise ValueError(f"regime {regime} has fewer than two calls")
            rv = report.samples(reference, regime, "video_mos")
            ra = report.samples(reference, regime, "audio_mos")
            vm, vci = stats.mean_ci95(v)
            am, aci = stats.mean_ci95(a)
            report.rows.append(ReportRow(pol, regime, len(v), vm, vci, am, aci,
                                         stats.welch_t_test(v, rv), stats.welch_t_test(a, ra)))
    return report


def run_nonstationary(policies, seed: int = 0, n_calls: int = 30, pool=None,
                      config: SimConfig = SimConfig(), workers: int = 1,
                      reference: str | None = None, paired: bool = True) -> Report:
    """A/B on the lbw -> lte -> hbw regime; ``Report.timelines_csv`` gives action timelines."""
    from .bwe import DEFAULT_POOL, make_pool

    pool = pool if pool is not None else make_pool(DEFAULT_POOL)
    names = {e.name for e in pool}
    missing = {"safe_filter", "probe_max", "loss_tolerant"} - names
    if missing:
        raise ValueError(f"nonstationary scenario needs {', '.join(sorted(missing))} in the pool")
    return run_ab(policies, ("nonstationary",), n_calls, seed, pool, config, reference, workers,
                  paired)


def run_interval_ablation(policies_by_interval: dict, trace_set=("stable_lbw", "stable_hbw"),
                          calls_per_policy: int = 50, master_seed: int = 0, pool=None,
                          base_config: SimConfig = SimConfig(), workers: int = 1,
                          reference: str | None = None, paired: bool = True) -> dict:
    """One report per decision interval; each entry supplies policies trained at that interval."""
    from dataclasses import replace

    reports = {}
    for interval in sorted(policies_by_interval):
        windows_per_interval(interval)
        cfg = replace(base_config, decision_interval=interval)
        reports[interval] = run_ab(policies_by_interval[interval], trace_set, calls_per_policy,
                                   master_seed, pool, cfg, reference, workers, paired)
    return reports
