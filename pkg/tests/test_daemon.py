from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabforge import graphs
from stabforge.daemon import (
    ADVERSARIAL,
    CENTRAL_RANDOM,
    DIST_RANDOM,
    HEIGHT_CAP,
    MAX_STEPS,
    SCRIPTED,
    SYNC,
    TERMINAL,
    DaemonPolicy,
    PolicyFault,
    compute_rounds,
    params_from_json,
    params_to_json,
    read_trace,
    rounds_until,
    run_execution,
    write_trace,
)
from stabforge.instances.leader import LeaderState
from stabforge.transformer import GREEDY, LAZY, TransParams, clean_config, config_from_json, fuzz_config
from strategies import instance_setup, setups

RANDOM_KINDS = (SYNC, CENTRAL_RANDOM, DIST_RANDOM, ADVERSARIAL)


def reference_round_marks(enabled_sets, selections):
    """Round ends straight from the definition, one round at a time.

    ``enabled_sets`` has one entry per configuration (steps + 1 of them).
    """
    marks = []
    start = 0
    m = len(selections)
    while start < m and enabled_sets[start]:
        end = 0
        for p in enabled_sets[start]:
            done = None
            for k in range(start, m):
                if p in selections[k] or p not in enabled_sets[k + 1]:
                    done = k + 1
                    break
            if done is None:
                return marks  # round never completes
            end = max(end, done)
        marks.append(end)
        start = end
    return marks


def _fuzzed(setup, seed, B=None):
    t, spec, init, h = setup
    params = TransParams(LAZY, B if B is not None else 2 * t.diameter + 4)
    return t, spec, params, fuzz_config(t, spec, h, params, random.Random(seed))


@settings(max_examples=80, deadline=None)
@given(setups(max_n=8), st.sampled_from(RANDOM_KINDS), st.integers(0, 10**6))
def test_selection_is_nonempty_subset_of_enabled(setup, kind, seed):
    t, spec, params, cfg = _fuzzed(setup, seed)
    trace = run_execution(t, spec, params, cfg, DaemonPolicy(kind, seed))
    assert trace.terminated and trace.stop_reason == TERMINAL
    for step in trace.steps:
        assert step.selected
        assert set(step.selected) <= set(step.enabled)
        if kind == SYNC:
            assert step.selected == step.enabled
        if kind == CENTRAL_RANDOM:
            assert len(step.selected) == 1
    assert len(trace.steps) <= trace.num_moves <= t.n * len(trace.steps)


@settings(max_examples=80, deadline=None)
@given(setups(max_n=8), st.sampled_from(RANDOM_KINDS), st.integers(0, 10**6))
def test_round_marks_match_definition(setup, kind, seed):
    t, spec, params, cfg = _fuzzed(setup, seed)
    trace = run_execution(t, spec, params, cfg, DaemonPolicy(kind, seed))
    enabled = [set(s.enabled) for s in trace.steps] + [set(trace.final_enabled)]
    selections = [set(s.selected) for s in trace.steps]
    assert trace.round_marks == reference_round_marks(enabled, selections)
    assert compute_rounds(trace) == trace.round_marks


def test_sync_daemon_one_round_per_step():
    t, spec, init, h = instance_setup("leader", graphs.path_graph(5), 1)
    trace = run_execution(t, spec, TransParams(LAZY, 10), clean_config(t, init), DaemonPolicy(SYNC))
    assert trace.round_marks == list(range(1, len(trace.steps) + 1))


def test_central_daemon_round_waits_for_everyone():
    # path with only the two ends enabled: the round needs both to move
    t, spec, _, _ = instance_setup("leader", graphs.path_graph(3), 0)
    init = {0: LeaderState(5, 5), 1: LeaderState(1, 1), 2: LeaderState(7, 7)}
    cfg = clean_config(t, init)
    script = ((0,), (2,))
    trace = run_execution(t, spec, TransParams(LAZY, 4), cfg, DaemonPolicy(SCRIPTED, script=script))
    assert [s.selected for s in trace.steps[:2]] == [(0,), (2,)]
    assert trace.round_marks[0] == 2


def test_empty_trace_has_no_rounds():
    t, spec, init, h = instance_setup("leader", graphs.path_graph(1), 0)
    trace = run_execution(t, spec, TransParams(LAZY, 3), clean_config(t, init), DaemonPolicy())
    assert trace.steps == [] and trace.round_marks == [] and trace.num_rounds == 0
    assert compute_rounds(trace) == []
    assert trace.terminated and trace.first_clean == 0


def test_rounds_until():
    marks = [2, 5, 6]
    assert [rounds_until(marks, i) for i in range(8)] == [0, 1, 1, 2, 2, 2, 3, 4]


def test_scripted_daemon_faults_on_disabled_node():
    t, spec, init, h = instance_setup("leader", graphs.path_graph(3), 0)
    cfg = clean_config(t, init)
    params = TransParams(LAZY, 4)
    enabled = set(run_execution(t, spec, params, cfg, DaemonPolicy(), max_steps=0).final_enabled)
    disabled = next(p for p in t.node_ids if p not in enabled)
    with pytest.raises(PolicyFault):
        run_execution(t, spec, params, cfg, DaemonPolicy(SCRIPTED, script=((disabled,),)))


def test_script_exhaustion_falls_back_to_first_enabled():
    t, spec, init, h = instance_setup("leader", graphs.path_graph(4), 3)
    cfg = clean_config(t, init)
    trace = run_execution(t, spec, TransParams(LAZY, 5), cfg, DaemonPolicy(SCRIPTED, script=()))
    assert trace.terminated
    assert all(s.selected == s.enabled[:1] for s in trace.steps)


def test_policy_validation_and_json():
    with pytest.raises(ValueError, match="unknown daemon"):
        DaemonPolicy("fair")
    with pytest.raises(ValueError):
        DaemonPolicy(SCRIPTED)
    p = DaemonPolicy(SCRIPTED, 4, ((1, 2), (3,)))
    assert DaemonPolicy.from_json(p.to_json()) == p
    params = TransParams(GREEDY, None, 50)
    assert params_from_json(params_to_json(params)) == params


def test_greedy_unbounded_does_not_terminate():
    t, spec, init, h = instance_setup("leader", graphs.path_graph(3), 0)
    cfg = clean_config(t, init)
    capped = run_execution(t, spec, TransParams(GREEDY, None, height_cap=20), cfg, DaemonPolicy())
    assert not capped.terminated and capped.stop_reason == HEIGHT_CAP
    limited = run_execution(t, spec, TransParams(GREEDY, None, height_cap=10**6), cfg, DaemonPolicy(), max_steps=300)
    assert not limited.terminated and limited.stop_reason == MAX_STEPS
    assert len(limited.steps) == 300
    assert {st.hei for st in limited.final.values()} == {300}


def test_single_node_lazy_moves():
    for name in ("leader", "bfs", "cluster-front"):
        t, spec, init, h = instance_setup(name, graphs.path_graph(1), 0)
        trace = run_execution(t, spec, TransParams(LAZY, 5), clean_config(t, init), DaemonPolicy())
        assert trace.num_moves == h.stability_time


def test_initial_must_cover_topology():
    t, spec, init, h = instance_setup("leader", graphs.path_graph(3), 0)
    cfg = clean_config(t, init)
    del cfg[0]
    with pytest.raises(ValueError):
        run_execution(t, spec, TransParams(), cfg, DaemonPolicy())


@settings(max_examples=25, deadline=None)
@given(setups(max_n=8), st.sampled_from(RANDOM_KINDS), st.integers(0, 10**6))
def test_execution_is_deterministic(setup, kind, seed):
    t, spec, params, cfg = _fuzzed(setup, seed)
    a = run_execution(t, spec, params, cfg, DaemonPolicy(kind, seed))
    b = run_execution(t, spec, params, cfg, DaemonPolicy(kind, seed))
    assert a.steps == b.steps and a.final == b.final and a.round_marks == b.round_marks


def test_trace_file_roundtrip(tmp_path):
    t, spec, init, h = instance_setup("bfs", graphs.random_connected(9, random.Random(2)), 2)
    params = TransParams(LAZY, 2 * t.diameter + 4)
    cfg = fuzz_config(t, spec, h, params, random.Random(5))
    trace = run_execution(t, spec, params, cfg, DaemonPolicy(DIST_RANDOM, 11))
    path = tmp_path / "trace.jsonl"
    write_trace(trace, path, {"note": 1})
    doc = read_trace(path)
    assert doc.header["note"] == 1 and doc.header["seed"] == 11
    assert len(doc.steps) == len(trace.steps)
    assert [tuple(s["sel"]) for s in doc.steps] == [s.selected for s in trace.steps]
    assert doc.footer["round_marks"] == trace.round_marks
    assert config_from_json(t, spec, doc.footer["final"]) == trace.final
    assert config_from_json(t, spec, doc.header["initial"]) == cfg


def test_trace_without_header(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text('{"sel": []}\n')
    with pytest.raises(ValueError, match="no header"):
        read_trace(path)
