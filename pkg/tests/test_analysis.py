from __future__ import annotations

import csv
import io
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabforge import graphs
from stabforge.analysis import (
    InvariantMonitor,
    check_terminal,
    find_d_path,
    find_e_path,
    first_clean_by_replay,
    is_almost_clean,
    is_clean,
    move_budget,
    no_error_rule_enabled,
    only_update_enabled,
    round_budget,
    tally_moves,
    verify_bounds,
)
from stabforge.daemon import CENTRAL_RANDOM, DIST_RANDOM, SYNC, DaemonPolicy, run_execution
from stabforge.evaluator import Evaluator
from stabforge.transformer import (
    CORRECT,
    ERROR,
    GREEDY,
    LAZY,
    History,
    TransNodeState,
    TransParams,
    clean_config,
    config_from_history,
    fuzz_config,
    reset_config,
)
from strategies import instance_setup, setups


def _path_setup(n=4, seed=0, name="leader"):
    return instance_setup(name, graphs.path_graph(n), seed)


def _with(cfg, h, p, s, height):
    cells = [h.row(i)[p] for i in range(1, height + 1)]
    return {**cfg, p: TransNodeState(cfg[p].init, s, History(cells))}


# -- configuration checkers ------------------------------------------------------


def test_height_gap_is_not_almost_clean():
    t, spec, init, h = _path_setup(2)
    cfg = config_from_history(t, h, {0: 0, 1: 2})
    assert not is_almost_clean(t, spec, cfg)
    assert not is_clean(t, spec, cfg)
    assert not no_error_rule_enabled(t, spec, cfg, TransParams())


def test_all_reset_is_almost_clean_not_clean():
    t, spec, init, h = _path_setup(4)
    cfg = reset_config(t, init)
    assert is_almost_clean(t, spec, cfg)
    assert not is_clean(t, spec, cfg)
    assert no_error_rule_enabled(t, spec, cfg, TransParams())
    assert not only_update_enabled(t, spec, cfg, TransParams())


def test_fault_free_start_is_clean():
    t, spec, init, h = _path_setup(4)
    cfg = clean_config(t, init)
    assert is_clean(t, spec, cfg) and is_almost_clean(t, spec, cfg)
    assert only_update_enabled(t, spec, cfg, TransParams())


def test_staircase_prefix_is_clean():
    t, spec, init, h = _path_setup(4, 3)
    cfg = config_from_history(t, h, {0: 3, 1: 2, 2: 2, 3: 1})
    assert is_clean(t, spec, cfg)


# -- paths ------------------------------------------------------------------------


def test_e_path_descends_to_root():
    t, spec, init, h = _path_setup(3)
    cfg = config_from_history(t, h, {0: 0, 1: 1, 2: 2}, status=ERROR)
    assert find_e_path(t, spec, cfg, 2) == [2, 1, 0]
    assert find_e_path(t, spec, cfg, 0) == [0]
    with pytest.raises(ValueError):
        find_e_path(t, spec, clean_config(t, init), 0)


def test_d_path_has_c_prefix_then_e_path():
    t, spec, init, h = _path_setup(4)
    cfg = config_from_history(t, h, {0: 3, 1: 2, 2: 1, 3: 0})
    for p in (2, 3):
        cfg = _with(cfg, h, p, ERROR, cfg[p].hei)
    assert find_d_path(t, spec, cfg, 0) == [0, 1, 2, 3]
    # a C node with no decreasing route
    assert find_d_path(t, spec, config_from_history(t, h, 1), 0) is None


# -- terminal shape ------------------------------------------------------------------


def test_check_terminal_examples():
    t, spec, init, h = _path_setup(4, 1)
    T = h.stability_time
    lazy = TransParams(LAZY, None)
    assert check_terminal(t, config_from_history(t, h, T), h, lazy) == []
    assert check_terminal(t, config_from_history(t, h, T + 3), h, lazy) == []
    assert "not uniform" in check_terminal(t, config_from_history(t, h, {0: 1, 1: 2, 2: 2, 3: 2}), h, lazy)[0]
    greedy = TransParams(GREEDY, T + 2)
    assert any("!= B" in m for m in check_terminal(t, config_from_history(t, h, T), h, greedy))
    if T > 0:
        assert any("< T" in m for m in check_terminal(t, config_from_history(t, h, T - 1), h, lazy))
    wrong = config_from_history(t, h, T + 1, status=ERROR)
    assert any("status E" in m for m in check_terminal(t, wrong, h, lazy))


# -- tallies and bounds ------------------------------------------------------------------


def test_clean_start_tally_counts_only_updates():
    t, spec, init, h = instance_setup("cluster-front", graphs.random_connected(10, random.Random(4)), 4)
    trace = run_execution(t, spec, TransParams(LAZY, None), clean_config(t, init), DaemonPolicy(DIST_RANDOM, 2))
    tally = tally_moves(trace)
    assert tally.R == tally.P == tally.C == 0
    assert tally.U == tally.total == sum(st.hei for st in trace.final.values())
    assert tally.first_clean == 0 and tally.U_before_clean == 0
    assert check_terminal(t, trace.final, h, trace.params) == []


@settings(max_examples=60, deadline=None)
@given(setups(max_n=8), st.sampled_from([SYNC, CENTRAL_RANDOM, DIST_RANDOM]), st.integers(0, 10**6))
def test_first_clean_online_matches_replay(setup, kind, seed):
    t, spec, init, h = setup
    params = TransParams(LAZY, 2 * t.diameter + 4)
    cfg = fuzz_config(t, spec, h, params, random.Random(seed))
    trace = run_execution(t, spec, params, cfg, DaemonPolicy(kind, seed))
    assert trace.first_clean == first_clean_by_replay(trace)
    tally = tally_moves(trace)
    per = tally.per_node.values()
    for key in ("R", "P", "C", "U"):
        assert getattr(tally, key) == sum(v[key] for v in per)
    assert tally.U_before_clean == sum(v["U_before_clean"] for v in per)
    assert tally.U == tally.U_before_clean + sum(v["U_after_clean"] for v in per)
    assert tally.total == trace.num_moves


def test_greedy_sync_takes_exactly_B_rounds():
    t, spec, init, h = instance_setup("bfs", graphs.random_connected(8, random.Random(1)), 1)
    B = 6
    trace = run_execution(t, spec, TransParams(GREEDY, B), clean_config(t, init), DaemonPolicy(SYNC))
    assert len(trace.steps) == B and trace.num_rounds == B
    report = verify_bounds(trace, h.stability_time)
    assert report.passed
    assert check_terminal(t, trace.final, h, trace.params) == []


def test_bound_report_serialization():
    t, spec, init, h = _path_setup(5, 2)
    params = TransParams(LAZY, None)
    cfg = fuzz_config(t, spec, h, params, random.Random(3))
    trace = run_execution(t, spec, params, cfg, DaemonPolicy(CENTRAL_RANDOM, 3))
    report = verify_bounds(trace, h.stability_time)
    assert report.passed, report.failures()
    doc = json.loads(report.dumps())
    assert doc["B"] == "inf" and doc["passed"] is True
    names = {c["name"] for c in doc["checks"]}
    assert {"r_moves", "p_moves", "c_moves_before_clean", "rounds_to_clean", "rounds_total"} <= names
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert len(rows) == len(report.checks) + 1
    assert rows[0][:3] == ["name", "anchor", "formula"]


def test_budget_formulas():
    lazy = TransParams(LAZY, None)
    assert move_budget(2, 1, None, 1, lazy) == 78
    assert round_budget(3, None, 2, lazy) == 15
    assert round_budget(3, 4, 2, TransParams(GREEDY, 4)) == 12
    assert round_budget(3, None, 2, TransParams(GREEDY, None)) is None
    assert move_budget(2, 1, None, 1, TransParams(GREEDY, None)) is None


# -- invariant monitor ------------------------------------------------------------------------


def test_monitor_quiet_on_real_executions():
    for seed in range(10):
        rng = random.Random(seed)
        t, spec, init, h = instance_setup("bfs", graphs.random_connected(10, rng), seed)
        params = TransParams(LAZY, 2 * t.diameter + 4)
        mon = InvariantMonitor(reference_every=1)
        run_execution(t, spec, params, fuzz_config(t, spec, h, params, rng), DaemonPolicy(DIST_RANDOM, seed), monitor=mon)
        assert mon.ok, mon.violations
        assert mon.configs >= 1


def test_monitor_catches_injected_violations():
    t, spec, init, h = _path_setup(3)
    params = TransParams(LAZY, 3)
    good = clean_config(t, init)
    mon = InvariantMonitor()
    mon(0, Evaluator(t, spec, params, good), None)
    # node 0 changes its input, node 1 gains cells without moving
    bad = dict(good)
    bad[0] = TransNodeState(init[2], CORRECT, History())
    bad[1] = TransNodeState(init[1], CORRECT, History([h.row(1)[1]] * 5))
    mon(1, Evaluator(t, spec, params, bad), {})
    text = "\n".join(mon.violations)
    assert not mon.ok
    assert "read-only init" in text
    assert "without moving" in text
    assert "exceeds B" in text
    assert "new roots" in text
    assert "clean configuration became not clean" in text


def test_monitor_message_cap():
    mon = InvariantMonitor(max_messages=2)
    for k in range(5):
        mon._fail(k, "x")
    assert mon.count == 5 and len(mon.violations) == 2
