from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabforge import graphs
from stabforge.instances import leader
from stabforge.instances.leader import LeaderState
from stabforge.sync_model import run_to_stability
from stabforge.transformer import (
    CORRECT,
    ERROR,
    GREEDY,
    LAZY,
    ContractViolation,
    DisabledNodeSelected,
    History,
    R_C,
    R_P,
    R_R,
    R_U,
    Rule,
    TransNodeState,
    TransParams,
    apply_step,
    clean_config,
    config_from_history,
    config_from_json,
    config_to_json,
    enabled_rule,
    enabled_rules,
    error_propag,
    fuzz_config,
    log_star,
    parse_bound,
    pred_algo_error,
    pred_dependency_error,
    smallest_propagation_index,
    widehat_algo,
)
from strategies import setups

LAZY_INF = TransParams(LAZY, None)


def node(init, s, *cells):
    return TransNodeState(init, s, History(cells))


def _leader_path(ids=(3, 1, 2)):
    t = graphs.path_graph(len(ids))
    spec = leader.make_spec(t, 16)
    init = {p: LeaderState(i, i) for p, i in zip(t.node_ids, ids)}
    return t, spec, init, run_to_stability(t, spec, init)


# -- widehat and predicates ------------------------------------------------


def test_widehat_on_row():
    # star centered at 0 with leaves 1, 2
    t = graphs.star_graph(3)
    spec = leader.make_spec(t, 16)
    cfg = {
        0: node(LeaderState(5, 5), CORRECT, LeaderState(5, 4)),
        1: node(LeaderState(2, 2), CORRECT, LeaderState(2, 2)),
        2: node(LeaderState(9, 9), CORRECT, LeaderState(9, 9)),
    }
    assert widehat_algo(t, spec, cfg, 0, 1) == LeaderState(5, 2)
    assert widehat_algo(t, spec, cfg, 0, 0) == LeaderState(5, 2)
    with pytest.raises(ContractViolation):
        widehat_algo(t, spec, cfg, 0, 2)


def test_algo_error_only_checks_covered_cells():
    t, spec, init, h = _leader_path()
    cfg = config_from_history(t, h, 1)
    assert not any(pred_algo_error(t, spec, cfg, p) for p in t.node_ids)
    bad = dict(cfg)
    bad[0] = node(init[0], CORRECT, LeaderState(3, 3))
    assert pred_algo_error(t, spec, bad, 0)
    # a wrong cell 3 is not checked while the neighbor is at height 1
    cfg3 = config_from_history(t, h, {0: 3, 1: 1, 2: 1})
    wrong = node(init[0], CORRECT, *cfg3[0].L[:2], LeaderState(3, 0))
    assert not pred_algo_error(t, spec, {**cfg3, 0: wrong}, 0)


def test_dependency_error_cases():
    t = graphs.path_graph(2)
    x = LeaderState(0, 0)
    # C node behind by two
    cfg = {0: node(x, CORRECT), 1: node(x, CORRECT, x, x)}
    assert pred_dependency_error(t, cfg, 0)
    assert not pred_dependency_error(t, cfg, 1)
    # E node without a lower E neighbor
    cfg = {0: node(x, ERROR, x), 1: node(x, CORRECT, x)}
    assert pred_dependency_error(t, cfg, 0)
    cfg = {0: node(x, ERROR, x), 1: node(x, ERROR)}
    assert not pred_dependency_error(t, cfg, 0)
    assert pred_dependency_error(t, cfg, 1)


def test_error_propag_window():
    t = graphs.path_graph(2)
    x = LeaderState(0, 0)
    cfg = {0: node(x, ERROR, x), 1: node(x, CORRECT, x, x, x, x)}
    assert [error_propag(t, cfg, 1, i) for i in range(6)] == [False, False, True, True, False, False]
    assert smallest_propagation_index(t, cfg, 1) == 2


# -- rule selection ----------------------------------------------------------


def test_rule_priority_order():
    rules = [R_U, R_C, R_P(3), R_P(1), R_R]
    assert sorted(rules, key=Rule.priority) == [R_R, R_P(1), R_P(3), R_C, R_U]
    assert [str(r) for r in (R_R, R_P(2), R_C, R_U)] == ["R", "P(2)", "C", "U"]
    assert Rule.parse("P(7)") == R_P(7)
    with pytest.raises(ValueError):
        Rule.parse("Q")


def test_clear_rule_enabled():
    t, spec, init, h = _leader_path((1, 2))
    cfg = {0: node(init[0], ERROR), 1: node(init[1], ERROR, h.row(1)[1])}
    assert enabled_rule(t, spec, cfg, LAZY_INF, 1) == R_C
    # an E node at height 0 is never reset, and here cannot clear either
    assert enabled_rule(t, spec, cfg, LAZY_INF, 0) is None


def test_propagation_rule_picks_smallest_index():
    t, spec, init, h = _leader_path((1, 2))
    cfg = config_from_history(t, h, {0: 1, 1: 4})
    cfg[0] = TransNodeState(init[0], ERROR, cfg[0].L)
    assert enabled_rule(t, spec, cfg, LAZY_INF, 1) == R_P(2)
    assert enabled_rule(t, spec, cfg, LAZY_INF, 0) == R_R


def test_reset_beats_everything():
    t, spec, init, h = _leader_path()
    cfg = config_from_history(t, h, 1)
    cfg[1] = node(init[1], CORRECT, LeaderState(1, 7))
    assert enabled_rule(t, spec, cfg, LAZY_INF, 1) == R_R


def test_nothing_enabled_at_terminal():
    t, spec, init, h = _leader_path()
    T = h.stability_time
    cfg = config_from_history(t, h, T)
    assert enabled_rules(t, spec, cfg, LAZY_INF) == {}
    # greedy keeps climbing until B
    assert set(enabled_rules(t, spec, cfg, TransParams(GREEDY, T + 2)).values()) == {R_U}
    assert enabled_rules(t, spec, config_from_history(t, h, T + 2), TransParams(GREEDY, T + 2)) == {}


def test_lazy_updates_until_stable():
    t, spec, init, h = _leader_path()
    cfg = clean_config(t, init)
    assert set(enabled_rules(t, spec, cfg, LAZY_INF)) == {0, 2}
    assert enabled_rule(t, spec, cfg, LAZY_INF, 1) is None  # node 1 already holds the min


# -- apply_step ----------------------------------------------------------------


def test_reset_effect_keeps_init():
    t, spec, init, h = _leader_path()
    cfg = config_from_history(t, h, 1)
    cfg[1] = node(init[1], CORRECT, LeaderState(1, 7))
    new, moves = apply_step(t, spec, cfg, LAZY_INF, [1])
    assert moves == {1: R_R}
    assert new[1] == TransNodeState(init[1], ERROR, History())
    assert new[0] is cfg[0]


def test_greedy_sync_climbs_one_per_step():
    t, spec, init, h = _leader_path()
    params = TransParams(GREEDY, 3)
    cfg = clean_config(t, init)
    for k in range(1, 4):
        en = enabled_rules(t, spec, cfg, params)
        assert set(en) == set(t.node_ids) and set(en.values()) == {R_U}
        cfg, _ = apply_step(t, spec, cfg, params, en)
        assert {st.hei for st in cfg.values()} == {k}
    assert enabled_rules(t, spec, cfg, params) == {}
    assert [cfg[p].L[k - 1] for p in t.node_ids for k in range(1, 4)] == [
        h.row(k)[p] for p in t.node_ids for k in range(1, 4)
    ]


def test_step_evaluates_on_old_configuration():
    t, spec, init, h = _leader_path()
    params = TransParams(GREEDY, 5)
    cfg = clean_config(t, init)
    new, moves = apply_step(t, spec, cfg, params, [0, 2])
    assert moves == {0: R_U, 2: R_U}
    assert [new[p].hei for p in range(3)] == [1, 0, 1]
    assert new[0].L[0] == h.row(1)[0] and new[2].L[0] == h.row(1)[2]


def test_disabled_selection_rejected():
    t, spec, init, h = _leader_path()
    cfg = config_from_history(t, h, h.stability_time)
    with pytest.raises(DisabledNodeSelected):
        apply_step(t, spec, cfg, LAZY_INF, [0])
    with pytest.raises(DisabledNodeSelected):
        apply_step(t, spec, cfg, LAZY_INF, [])


# -- history, params, serialization ------------------------------------------


def test_history_versions_are_independent():
    a = History([1, 2])
    b = a.push(3)
    c = a.push(4)  # older version: must not clobber b
    d = b.truncate(1).push(9)
    assert list(a) == [1, 2]
    assert list(b) == [1, 2, 3]
    assert list(c) == [1, 2, 4]
    assert list(d) == [1, 9]
    assert b.truncate(10) is b
    assert b[-1] == 3 and b[0:2] == [1, 2]
    with pytest.raises(IndexError):
        a[2]


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 5)), max_size=40))
def test_history_matches_list_model(ops):
    h, model = History(), []
    versions = []
    for push, k in ops:
        if push:
            h, model = h.push(k), model + [k]
        else:
            h, model = h.truncate(k), model[:k]
        versions.append((h, list(model)))
    for v, m in versions:
        assert list(v) == m and len(v) == len(m) and v == m


def test_params_validation():
    with pytest.raises(ValueError):
        TransParams("eager", 3)
    with pytest.raises(ValueError):
        TransParams(LAZY, 0)
    assert TransParams(GREEDY, None).non_terminating
    assert not TransParams(LAZY, None).non_terminating
    assert TransParams(LAZY, 4).effective_cap(graphs.path_graph(2)) == 4
    assert TransParams(LAZY, None, height_cap=7).effective_cap(graphs.path_graph(2)) == 7


def test_parse_bound():
    assert parse_bound("inf") is None and parse_bound(None) is None
    assert parse_bound("12") == 12 and parse_bound(5) == 5
    with pytest.raises(ValueError):
        parse_bound("0")
    with pytest.raises(ValueError):
        parse_bound("many")


def test_log_star():
    assert [log_star(x) for x in (0, 1, 2, 3, 4, 16, 17, 65536, 65537)] == [0, 0, 1, 2, 2, 3, 4, 4, 5]


@settings(max_examples=40, deadline=None)
@given(setups(max_n=8), st.integers(0, 10**6), st.sampled_from([None, 1, 3, 9]))
def test_fuzz_config_shape_and_json_roundtrip(setup, seed, B):
    t, spec, init, h = setup
    params = TransParams(LAZY, B)
    cfg = fuzz_config(t, spec, h, params, random.Random(seed))
    top = 2 * t.diameter + 2 if B is None else min(B, 2 * t.diameter + 2)
    for p in t.node_ids:
        assert cfg[p].init == init[p]
        assert cfg[p].s in (CORRECT, ERROR)
        assert 0 <= cfg[p].hei <= top
    assert config_from_json(t, spec, config_to_json(t, spec, cfg)) == cfg


def test_config_from_json_errors():
    t, spec, init, h = _leader_path()
    doc = config_to_json(t, spec, clean_config(t, init))
    with pytest.raises(KeyError):
        config_from_json(t, spec, {k: v for k, v in doc.items() if k != "0"})
    doc["0"]["s"] = "X"
    with pytest.raises(ValueError):
        config_from_json(t, spec, doc)
