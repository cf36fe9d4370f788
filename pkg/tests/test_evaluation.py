import numpy as np
import pytest

from metabwe.bwe import DEFAULT_POOL, make_pool
from metabwe.evaluation import collect, run_ab, run_interval_ablation, run_nonstationary
from metabwe.meta import FixedPolicy, RandomPolicy, RulePolicy
from metabwe.sim import SimConfig
from metabwe.trace import generate_trace

POOL = make_pool(DEFAULT_POOL)
SHORT = SimConfig(call_duration=30.0)


def test_identical_policies_are_indistinguishable():
    rep = run_ab([FixedPolicy(0, "a"), FixedPolicy(0, "b")], ("stable_lbw", "lte"), 4,
                 pool=POOL, config=SHORT)
    for g in rep.regimes:
        assert rep.row("a", g).video_mos == rep.row("b", g).video_mos
        assert rep.row("b", g).p_video == 1.0
        assert rep.row("b", g).p_audio == 1.0


def test_report_shape_and_bounds():
    pols = [FixedPolicy(i, n) for i, n in enumerate(DEFAULT_POOL)] + [RandomPolicy(1)]
    regimes = ("stable_lbw", "burst_hbw", "lte")
    rep = run_ab(pols, regimes, 3, pool=POOL, config=SHORT)
    assert len(rep.rows) == len(pols) * len(regimes)
    assert len(rep.calls) == len(pols) * len(regimes) * 3
    for r in rep.rows:
        assert r.n == 3
        assert 1.0 <= r.video_mos <= 5.0 and 1.0 <= r.audio_mos <= 5.0
        assert r.video_ci >= 0 and r.audio_ci >= 0
        assert 0.0 <= r.p_video <= 1.0 and 0.0 <= r.p_audio <= 1.0
    head = rep.table_csv().splitlines()[0]
    assert head == "policy,regime,n,video_mos,video_ci,audio_mos,audio_ci,p_video,p_audio"


def test_paired_schedule():
    rep = run_ab([FixedPolicy(0, "a"), FixedPolicy(1, "b")], ("fluct_hbw",), 3, pool=POOL,
                 config=SHORT)
    a = [(c.trace_id, c.seed) for c in rep.calls if c.policy == "a"]
    b = [(c.trace_id, c.seed) for c in rep.calls if c.policy == "b"]
    assert a == b and len(set(a)) == 3


def test_unpaired_schedule():
    rep = run_ab([FixedPolicy(0, "a"), FixedPolicy(0, "b")], ("fluct_hbw",), 3, pool=POOL,
                 config=SHORT, paired=False)
    a = [(c.trace_id, c.seed) for c in rep.calls if c.policy == "a"]
    b = [(c.trace_id, c.seed) for c in rep.calls if c.policy == "b"]
    assert not set(a) & set(b)


def test_worker_count_does_not_change_reports():
    pols = [FixedPolicy(0, "a"), RandomPolicy(3), RulePolicy("jitter")]
    one = run_ab(pols, ("burst_lbw", "stable_hbw"), 3, pool=POOL, config=SHORT, workers=1)
    two = run_ab(pols, ("burst_lbw", "stable_hbw"), 3, pool=POOL, config=SHORT, workers=2)
    assert one.table_csv() == two.table_csv()
    assert one.audit_csv() == two.audit_csv()


def test_explicit_trace_sets():
    traces = {"lte": [generate_trace("lte", s, 30.0) for s in range(3)]}
    rep = run_ab([FixedPolicy(2, "lt"), FixedPolicy(0, "sf")], traces, 3, pool=POOL,
                 config=SHORT)
    assert [c.trace_id for c in rep.calls if c.policy == "lt"] == ["lte-0", "lte-1", "lte-2"]


def test_run_ab_errors():
    with pytest.raises(ValueError, match="empty"):
        run_ab([FixedPolicy(0)], (), 3, pool=POOL)
    with pytest.raises(ValueError, match=">= 2"):
        run_ab([FixedPolicy(0)], ("lte",), 1, pool=POOL)
    with pytest.raises(ValueError, match="unique"):
        run_ab([FixedPolicy(0), FixedPolicy(0)], ("lte",), 2, pool=POOL)
    with pytest.raises(ValueError, match="unknown regime"):
        run_ab([FixedPolicy(0)], ("wifi",), 2, pool=POOL)
    with pytest.raises(ValueError, match="reference"):
        run_ab([FixedPolicy(0)], ("lte",), 2, pool=POOL, reference="ivy")


def test_nonstationary_timelines():
    rep = run_nonstationary([FixedPolicy(1, "pm"), RandomPolicy(0)], n_calls=2, pool=POOL)
    assert rep.regimes == ["nonstationary"]
    lines = rep.timelines_csv("pm").splitlines()
    assert lines[0] == "call_id,interval_index,action"
    assert len(lines) == 1 + 2 * 20
    assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} == {"1"}


def test_nonstationary_default_call_count():
    import inspect
    assert inspect.signature(run_nonstationary).parameters["n_calls"].default == 30


def test_nonstationary_needs_full_pool():
    with pytest.raises(ValueError, match="loss_tolerant"):
        run_nonstationary([FixedPolicy(0)], n_calls=2, pool=make_pool(["safe_filter", "probe_max"]))


def test_interval_ablation():
    pols = {i: [FixedPolicy(0, "sf"), FixedPolicy(1, "pm")] for i in (1.2, 3.0)}
    out = run_interval_ablation(pols, ("stable_lbw",), 2, pool=POOL, base_config=SHORT)
    assert sorted(out) == [1.2, 3.0]
    assert len(out[1.2].calls[0].actions) == 25
    assert len(out[3.0].calls[0].actions) == 10
    with pytest.raises(ValueError, match="multiple"):
        run_interval_ablation({5.0: pols[1.2]}, ("stable_lbw",), 2, pool=POOL)


def test_collect_layout():
    ds = collect(4, 0, POOL)
    assert len(ds) == 80
    ids = [t.call_id for t in ds.transitions]
    assert len(set(ids)) == 4
    assert ds.pool_names == DEFAULT_POOL
    again = collect(4, 0, POOL)
    assert again == ds
    assert collect(4, 1, POOL) != ds
    assert np.all([t.estimates is not None for t in ds.transitions])
