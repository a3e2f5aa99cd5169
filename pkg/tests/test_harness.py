"""Exact DP oracle, Monte Carlo evaluation, replay and the case-study drivers."""

import math

import numpy as np
import pytest

from conftest import SMALL, bundled, deterministic
from gridmdp.adp import ADPConfig, ValueTable, bellman_action_select, post_decision, train
from gridmdp.dispatch import DispatchCase, immediate_cost
from gridmdp.events import (
    MarkovState,
    enumerate_successors,
    markov_state_update,
    root_state,
)
from gridmdp.grid import enumerate_actions, is_radial
from gridmdp.harness import (
    STATE_CAP,
    StateSpaceError,
    evaluate_policy,
    exact_dp,
    load_realization,
    parse_probe,
    read_dp_values,
    read_report,
    read_strategy,
    replay,
    replay_log,
    run_case_study,
    write_dp_values,
    write_report,
    write_strategy,
)


def tree_walk(net, sc):
    """Expected optimal cost by plain recursion over the full outcome tree."""
    def cost(state, action):
        c, _ = immediate_cost(net, state, action, DispatchCase(topology=None, eta=sc.eta_at(state.t), dt=sc.dt))
        return c

    def value(state):
        best = math.inf
        for a in enumerate_actions(net, state):
            total = cost(state, a)
            if state.t < sc.horizon:
                total += math.fsum(tr.probability * value(tr.successor)
                                   for tr in enumerate_successors(state, a, sc, net))
            best = min(best, total)
        return best

    root = root_state(net)
    return math.fsum(tr.probability * value(tr.successor)
                     for tr in enumerate_successors(root, root.open_dispatchable, sc, net))


# -- exact DP -------------------------------------------------------------------

@pytest.mark.parametrize("name", SMALL)
def test_exact_dp_matches_tree_walk(name):
    net, sc = bundled(name)
    assert exact_dp(net, sc).root_value == pytest.approx(tree_walk(net, sc), rel=1e-12)


@pytest.mark.parametrize("name", SMALL)
def test_zero_probability_is_sum_of_myopic_costs(name):
    net, sc = bundled(name)
    calm = sc.with_rate(0.0)
    dp = exact_dp(net, calm)
    per_period = []
    for t in range(1, calm.horizon + 1):
        state = MarkovState(t)
        per_period.append(min(immediate_cost(net, state, a, DispatchCase(topology=None, eta=calm.eta_at(t)))[0]
                              for a in enumerate_actions(net, state)))
        action, _, _ = bellman_action_select(net, state, ValueTable(), calm)
        assert dp.policy[(t, (), ())] == action
    assert dp.root_value == pytest.approx(sum(per_period), rel=1e-12)


def test_hand4_preemptive_switching():
    net, sc = bundled("hand4")
    dp = exact_dp(net, sc)
    l23, l14 = net.line_by_label("2-3").id, net.line_by_label("1-4").id
    # 2-3 fails for sure in period 2: open it in period 1 and feed 3 and 4 over the tie
    assert dp.policy[(1, (), ())] == frozenset({l23})
    assert l14 not in dp.policy[(1, (), ())]
    myopic = evaluate_policy(net, sc, None, 1, 0)
    assert dp.root_value < myopic.mean_cost


@pytest.mark.parametrize("name", SMALL)
def test_dp_values_constant_within_exposure_class(name):
    net, sc = bundled(name)
    dp = exact_dp(net, sc)
    classes = {}
    for key, v in dp.post_values.items():
        state = MarkovState(key[0], key[1], key[2], key[3])
        classes.setdefault(post_decision(net, state, key[3], sc), []).append(v)
    assert max(max(v) - min(v) for v in classes.values()) == 0.0
    vt = dp.value_table(net, sc)
    assert len(vt) == len(classes)


def test_state_cap():
    net, sc = bundled("toy_a")
    with pytest.raises(StateSpaceError, match="cap"):
        exact_dp(net, sc, cap=5)
    net, sc = bundled("ieee33")
    with pytest.raises(StateSpaceError, match="cap of 20000"):
        exact_dp(net, sc, cap=20_000)
    assert STATE_CAP == 10 ** 6


def test_dp_values_file(tmp_path):
    net, sc = bundled("toy_a")
    dp = exact_dp(net, sc)
    path = tmp_path / "dp.json"
    write_dp_values(path, net, dp)
    data = read_dp_values(path)
    assert data["root_value"] == dp.root_value
    assert len(data["policy"]) == len(dp.policy)
    write_dp_values(tmp_path / "again.json", net, exact_dp(net, sc))
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


# -- Monte Carlo evaluation -----------------------------------------------------

@pytest.mark.parametrize("name", SMALL)
def test_deterministic_evaluation_equals_dp(name):
    net, sc = bundled(name)
    sc = deterministic(sc)
    dp = exact_dp(net, sc)
    rep = evaluate_policy(net, sc, dp.value_table(net, sc), 3, 0)
    assert rep.std_error == 0.0
    assert rep.mean_cost == pytest.approx(dp.root_value, rel=1e-12)


def test_calm_scenario_has_no_spread():
    net, sc = bundled("toy_b")
    calm = sc.with_rate(0.0)
    vt, _ = train(net, calm, ADPConfig(iterations=20))
    rep = evaluate_policy(net, calm, vt, 50, 1)
    assert rep.std_error == 0.0
    assert rep.mean_cost == pytest.approx(exact_dp(net, calm).root_value, rel=1e-12)
    assert rep.misses == 0


def test_myopic_policy_reports_no_misses():
    net, sc = bundled("toy_a")
    assert evaluate_policy(net, sc, None, 20, 0).misses == 0
    sparse_table, _ = train(net, sc, ADPConfig(iterations=2))
    assert evaluate_policy(net, sc, sparse_table, 20, 0).misses > 0


def test_standard_error_shrinks_with_paths():
    net, sc = bundled("toy_a")
    ratios = []
    for seed in range(6):
        small = evaluate_policy(net, sc, None, 300, seed).std_error
        large = evaluate_policy(net, sc, None, 600, seed).std_error
        ratios.append(large / small)
    assert np.mean(ratios) == pytest.approx(1 / math.sqrt(2), abs=0.08)


@pytest.mark.parametrize("name", ["toy_c", "ieee33"])
def test_logs_replay_to_identical_costs(name):
    net, sc = bundled(name)
    rep = evaluate_policy(net, sc, None, 40, 3)
    for entries, total in zip(rep.logs, rep.path_costs):
        costs = replay_log(net, sc, entries)
        assert costs == [e["cost"] for e in entries]
        assert sum(costs) == total


def test_report_fields_and_round_trip(tmp_path):
    net, sc = bundled("toy_a")
    rep = evaluate_policy(net, sc, None, 30, 2)
    assert rep.mean_cost >= 0 and rep.std_error >= 0
    assert len(rep.shed_energy) == sc.horizon
    assert rep.policy == "myopic"
    assert rep.header["seed"] == 2
    path = tmp_path / "r.json"
    write_report(path, rep)
    assert read_report(path) == rep


@pytest.mark.parametrize("threads", [2, 3])
def test_thread_count_does_not_change_report(threads, monkeypatch):
    net, sc = bundled("toy_b")
    vt, _ = train(net, sc, ADPConfig(iterations=100))
    one = evaluate_policy(net, sc, vt, 60, 4, threads=1)
    many = evaluate_policy(net, sc, vt, 60, 4, threads=threads)
    assert many.to_dict() == one.to_dict()
    monkeypatch.setenv("GRIDMDP_THREADS", str(threads))
    assert evaluate_policy(net, sc, vt, 60, 4).to_dict() == one.to_dict()


def test_paths_must_be_positive():
    net, sc = bundled("toy_a")
    with pytest.raises(ValueError):
        evaluate_policy(net, sc, None, 0, 0)


def test_shared_seeds_pair_paths():
    net, sc = bundled("toy_a")
    dp = exact_dp(net, sc)
    a = evaluate_policy(net, sc, None, 20, 8)
    b = evaluate_policy(net, sc, dp.value_table(net, sc), 20, 8)
    assert [[e["failures"] for e in log][:1] for log in a.logs] == [[e["failures"] for e in log][:1] for log in b.logs]


# -- probes ---------------------------------------------------------------------

def test_parse_probe():
    net, sc = bundled("ieee33")
    pds = parse_probe(net, sc, "2:10-11,12-13,25-29,1-18,8-21")
    assert pds.t == 2 and pds.failed == ()
    with pytest.raises(ValueError, match="radial"):
        parse_probe(net, sc, "2:10-11")
    with pytest.raises(ValueError, match="outside"):
        parse_probe(net, sc, "9:10-11")
    with pytest.raises(ValueError, match="bad probe"):
        parse_probe(net, sc, "x:10-11")


# -- case studies ---------------------------------------------------------------

@pytest.fixture(scope="module")
def study33():
    return run_case_study("ieee33")


@pytest.fixture(scope="module")
def study123():
    return run_case_study("ieee123")


def _check_feasible(study, realization):
    net, sc = study.network, study.scenario
    pds = root_state(net)
    for row in study.strategy.rows:
        fails = [l for l in realization.get(row.period, []) if l not in pds.failed_lines]
        state = markov_state_update(pds, fails, sc, net)
        action = frozenset(net.line_by_label(l).id for l in row.open_after)
        assert action in enumerate_actions(net, state)
        assert is_radial(net, net.closed_lines(action, state.unavailable), state.unavailable)
        assert not action & state.unavailable
        pds = state.with_action(action)


def test_ieee33_table4_row_format(study33):
    rows = study33.strategy.rows
    net = study33.network
    assert [r.period for r in rows] == list(range(1, 7))
    assert rows[1].failures == ["6-7"]
    assert len(rows[0].opened) == 1 and len(rows[0].closed) == 1
    _check_feasible(study33, load_realization("ieee33_table4", net))
    assert set(study33.converged) == {"root", "S1,2", "S2,2", "S3,2", "S4,2", "S1,1"}


def test_ieee33_table5_replay(study33):
    net, sc = study33.network, study33.scenario
    realization = load_realization("ieee33_table5", net)
    table = replay(net, sc, study33.table, realization)
    assert all(r.failures == [] for r in table.rows)
    study = type(study33)(**{**study33.__dict__, "strategy": table})
    _check_feasible(study, realization)


def test_ieee123_strategy_uses_dispatchable_lines(study123):
    net = study123.network
    dispatchable = {net.line(l).label for l in net.dispatchable}
    for row in study123.strategy.rows:
        assert set(row.opened) <= dispatchable
        assert set(row.closed) <= dispatchable
    _check_feasible(study123, load_realization("ieee123_table6", net))


def test_strategy_round_trip(study33, tmp_path):
    path = tmp_path / "s.json"
    write_strategy(path, study33.strategy)
    assert read_strategy(path) == study33.strategy


def test_case_study_rejects_unknown():
    with pytest.raises(ValueError, match="unknown case"):
        run_case_study("ieee999")
    with pytest.raises(ValueError, match="unknown overrides"):
        run_case_study("ieee33", {"bogus": 1})
