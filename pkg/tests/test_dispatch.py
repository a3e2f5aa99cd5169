"""Load-shedding dispatch, its LP, and the per-period cost."""

import math
import random

import numpy as np
import pytest
from scipy import sparse

from conftest import make_network, two_bus
from oracles import flow_residual, random_instances
from gridmdp.adp import tie_argmin
from gridmdp.dispatch import (
    CostModel,
    DispatchCase,
    DispatchError,
    LinearProgram,
    big_m,
    build_dispatch_lp,
    immediate_cost,
    islanded_load,
    solve_dispatch,
    solve_lp,
)
from gridmdp.events import MarkovState
from gridmdp.grid import energization, feasible_configs, load_network, tie_rank

TWO_BUS_SHED = 1.0 - math.sqrt(2.0) * 0.9 / 1.5


def _case(net, open_lines=None, failed=frozenset(), scale=1.0, **kw):
    open_lines = net.initial_open if open_lines is None else open_lines
    topo = energization(net, net.closed_lines(open_lines, failed), failed)
    loads = {b.id: (b.p_load * scale, b.q_load * scale) for b in net.buses}
    return DispatchCase(topology=topo, loads=loads, **kw)


def _lp(c, A_ub=None, b_ub=(), A_eq=None, b_eq=(), bounds=None):
    n = len(c)
    return LinearProgram(
        c=np.asarray(c, dtype=float),
        A_ub=sparse.csr_matrix(np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float)),
        b_ub=np.asarray(b_ub, dtype=float),
        A_eq=sparse.csr_matrix(np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float)),
        b_eq=np.asarray(b_eq, dtype=float),
        bounds=bounds or [(None, None)] * n,
        names=[f"x{i}" for i in range(n)],
    )


# -- LP solver ------------------------------------------------------------------

def test_solve_lp_trivial():
    status, sol = solve_lp(_lp([1.0], A_ub=[[-1.0]], b_ub=[-3.0]))
    assert status == "optimal"
    assert sol.x[0] == pytest.approx(3.0, abs=1e-12)


def test_solve_lp_infeasible():
    status, sol = solve_lp(_lp([1.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0]))
    assert status == "infeasible"
    assert sol is None


def test_solve_lp_unbounded():
    status, sol = solve_lp(_lp([-1.0], bounds=[(0.0, None)]))
    assert status == "unbounded"
    assert sol is None


def test_lp_rejects_bad_dimensions():
    with pytest.raises(ValueError, match="dimensions"):
        _lp([1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])
    with pytest.raises(ValueError, match="finite"):
        _lp([math.inf])


def test_solve_lp_deterministic():
    net = load_network("ieee33")
    lp = build_dispatch_lp(net, _case(net, scale=1.6))
    a, b = solve_lp(lp)[1], solve_lp(lp)[1]
    assert np.array_equal(a.x, b.x)


# -- goldens --------------------------------------------------------------------

def test_two_bus_uncongested():
    net = two_bus(s_max=2.0)
    res = solve_dispatch(net, _case(net))
    assert res.cost == 0.0
    assert res.shed_p[2] == 0.0


@pytest.mark.parametrize("formulation", ["tree", "full"])
def test_two_bus_octagon_golden(formulation):
    net = two_bus(s_max=0.9)
    res = solve_dispatch(net, _case(net), formulation=formulation)
    assert res.used_lp
    assert res.shed_p[2] == pytest.approx(TWO_BUS_SHED, abs=1e-6)
    assert round(res.shed_p[2], 4) == 0.1515
    assert res.shed_q[2] == pytest.approx(0.5 * TWO_BUS_SHED, abs=1e-6)
    fp, fq = res.flows[1]
    # binding cut is the 45-degree one, not the box
    assert fp + fq == pytest.approx(math.sqrt(2.0) * 0.9, abs=1e-6)
    assert fp < 0.9
    assert res.cost == pytest.approx(1000.0 * TWO_BUS_SHED, abs=1e-3)


def test_two_bus_voltage_substitution():
    net = two_bus(s_max=2.0, base_mva=1.0)
    res = solve_dispatch(net, _case(net))
    assert res.voltages_sq[1] == 1.0
    assert res.voltages_sq[2] == pytest.approx(0.97, abs=1e-12)


def test_quadratic_violation_flagged_not_rejected():
    net = two_bus(s_max=0.9)
    res = solve_dispatch(net, _case(net))
    fp, fq = res.flows[1]
    assert fp ** 2 + fq ** 2 > 0.9 ** 2
    assert fp ** 2 + fq ** 2 <= 2 * 0.9 ** 2
    assert res.quadratic_violations == [1]
    assert res.feasible


@pytest.mark.parametrize("formulation", ["tree", "full"])
def test_intact_ieee33_sheds_nothing(formulation):
    net = load_network("ieee33")
    case = _case(net)
    res = solve_dispatch(net, case, formulation=formulation)
    assert res.cost == 0.0
    assert sum(res.shed_p.values()) == 0.0
    # full service checked directly against the limits
    for l in net.lines:
        fp, fq = res.flows[l.id]
        assert abs(fp) <= l.s_max and abs(fq) <= l.s_max
    for b in net.buses:
        assert b.v_min ** 2 <= res.voltages_sq[b.id] <= b.v_max ** 2
    status, sol = solve_lp(build_dispatch_lp(net, case))
    assert status == "optimal"
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_non_radial_rejected():
    net = make_network(3, [(1, 2), (2, 3), (1, 3)])
    topo = energization(net, {1, 2, 3})
    with pytest.raises(DispatchError, match="radial"):
        solve_dispatch(net, DispatchCase(topology=topo))
    with pytest.raises(DispatchError, match="radial"):
        build_dispatch_lp(net, DispatchCase(topology=topo))


@pytest.mark.parametrize("field,value", [("eta", 0.0), ("dt", -1.0)])
def test_case_validation(field, value):
    with pytest.raises(ValueError):
        DispatchCase(topology=None, **{field: value})


# -- immediate cost -------------------------------------------------------------

def test_intact_zero_switch_cost():
    net = make_network(3, [(1, 2), (2, 3)], switch_cost=0.0)
    cost, _ = immediate_cost(net, MarkovState(1), frozenset(), DispatchCase(topology=None))
    assert cost == 0.0


def test_intact_ieee33_cost_is_switch_cost_only():
    net = load_network("ieee33")
    cost, res = immediate_cost(net, MarkovState(1), net.initial_open, DispatchCase(topology=None))
    closed_switches = [l for l in net.dispatchable if l not in net.initial_open]
    assert cost == pytest.approx(sum(net.line(l).switch_cost for l in closed_switches))
    assert not res.used_lp


def test_single_islanded_bus_costs_500():
    net = make_network(3, [(1, 2), (2, 3)], loads={2: (0.2, 0.1), 3: (0.5, 0.2)}, switch_cost=0.0)
    state = MarkovState(1, {2: 1})
    cost, res = immediate_cost(net, state, frozenset(), DispatchCase(topology=None, eta=1000.0, dt=1.0))
    assert cost == pytest.approx(500.0)
    assert sum(res.shed_p.values()) == 0.0


def test_total_blackout():
    net = load_network("ieee33")
    state = MarkovState(1, {l: 1 for l in net.line_ids})
    case = DispatchCase(topology=None, eta=800.0, dt=2.0)
    cost, _ = immediate_cost(net, state, frozenset(), case)
    assert cost == pytest.approx(800.0 * 2.0 * sum(b.p_load for b in net.buses))


# -- invariants -----------------------------------------------------------------

@pytest.mark.parametrize("name", ["ieee33", "ieee123"])
def test_conservation(name):
    for net, failed, a, s in random_instances(name, 25, 1):
        case = _case(net, a, failed, scale=s)
        res = solve_dispatch(net, case)
        assert flow_residual(net, case, res) < 1e-9
        for l in net.lines:
            if l.id not in case.topology.closed_lines:
                assert res.flows[l.id] == (0.0, 0.0)


@pytest.mark.parametrize("name,seed", [("ieee33", 2), ("ieee123", 3)])
def test_tree_lp_matches_full_lp(name, seed):
    n_lp = 0
    for net, failed, a, s in random_instances(name, 30, seed, scale=(1.2, 2.5)):
        case = _case(net, a, failed, scale=s)
        tree = solve_dispatch(net, case, "tree")
        full = solve_dispatch(net, case, "full")
        n_lp += tree.used_lp
        assert tree.cost == pytest.approx(full.cost, rel=1e-9, abs=1e-6)
        for b in tree.voltages_sq:
            assert b in full.voltages_sq
    assert n_lp > 5


@pytest.mark.parametrize("name", ["hand4", "toy_b", "ieee33"])
def test_big_m_inert_for_open_lines(name):
    for net, failed, a, s in random_instances(name, 10, 4, scale=(1.5, 3.0)):
        case = _case(net, a, failed, scale=s)
        lp = build_dispatch_lp(net, case)
        topo = case.topology
        lines = [l for l in net.lines if l.from_bus in topo.energized_buses and l.to_bus in topo.energized_buses]
        drop = {6 * i + k for i, l in enumerate(lines) if l.id not in topo.closed_lines for k in (0, 1)}
        keep = [r for r in range(lp.A_ub.shape[0]) if r not in drop]
        reduced = LinearProgram(c=lp.c, A_ub=lp.A_ub[keep], b_ub=lp.b_ub[keep], A_eq=lp.A_eq,
                                b_eq=lp.b_eq, bounds=lp.bounds, names=lp.names)
        s1, full = solve_lp(lp)
        s2, red = solve_lp(reduced)
        assert s1 == s2 == "optimal"
        assert full.objective == pytest.approx(red.objective, rel=1e-9, abs=1e-7)


def test_big_m_bounds_voltage_drop():
    net = load_network("ieee33")
    v_span = 1.05 ** 2 - 0.9 ** 2
    worst = max(2 * (l.r + l.x) * l.s_max / net.base_mva for l in net.lines)
    assert big_m(net) >= v_span + worst


@pytest.mark.parametrize("name", ["ieee33", "toy_a"])
def test_failure_never_decreases_shedding(name):
    for net, failed, a, s in random_instances(name, 25, 5, scale=(1.0, 2.5)):
        case = _case(net, a, failed, scale=s)
        base = solve_dispatch(net, case).cost + 1000.0 * islanded_load(net, case.topology, case.loads)
        for extra in sorted(case.topology.closed_lines)[:6]:
            more = failed | {extra}
            topo = energization(net, case.topology.closed_lines, more)
            c2 = DispatchCase(topology=topo, loads=case.loads)
            worse = solve_dispatch(net, c2).cost + 1000.0 * islanded_load(net, topo, case.loads)
            assert worse >= base - 1e-6


def test_scaling_costs_scales_dispatch():
    net = load_network("ieee33")
    a = _case(net, scale=1.8, eta=1000.0)
    b = _case(net, scale=1.8, eta=3000.0, dt=0.5)
    assert solve_dispatch(net, b).cost == pytest.approx(1.5 * solve_dispatch(net, a).cost, rel=1e-9)


# -- cached cost model ----------------------------------------------------------

def _stressed(name, factor):
    from gridmdp.grid import network_from_dict, network_to_dict

    data = network_to_dict(load_network(name))
    for b in data["buses"]:
        b["p_mw"] *= factor
        b["q_mvar"] *= factor
    return network_from_dict(data, name=name)


@pytest.mark.parametrize("name,factor,rounds", [("ieee33", 1.0, 4), ("ieee33", 1.7, 4), ("ieee123", 1.5, 1)])
def test_cost_model_matches_immediate_cost(name, factor, rounds):
    net = _stressed(name, factor)
    cm = CostModel(net, lambda t: 1000.0 + 100 * t, 1.0)
    rnd = random.Random(6)
    for _ in range(rounds):
        failed = frozenset(rnd.sample(sorted(net.line_ids - net.fixed_open), 2))
        state = MarkovState(2, {l: 1 for l in failed})
        acts = feasible_configs(net, failed)
        costs = cm.costs(2, state.unavailable, acts)
        for i in rnd.sample(range(len(acts)), min(8, len(acts))):
            ref, _ = immediate_cost(net, state, acts[i], DispatchCase(topology=None, eta=1200.0))
            assert costs[i] == pytest.approx(ref, rel=1e-9, abs=1e-6)


@pytest.mark.parametrize("name,factor,rounds", [("ieee33", 1.6, 6), ("ieee123", 1.4, 2)])
def test_lower_bound_below_lp(name, factor, rounds):
    net = _stressed(name, factor)
    rnd = random.Random(7)
    for _ in range(rounds):
        failed = frozenset(rnd.sample(sorted(net.line_ids - net.fixed_open), rnd.randint(0, 2)))
        acts = feasible_configs(net, failed)
        if not acts:
            continue
        cm = CostModel(net, lambda t: 1000.0)
        lower, _, exact = cm.bounds(failed, acts)
        lower = lower.copy()
        exact_before = exact.copy()
        shed, _ = cm.shed_switch(failed, acts)
        assert np.all(lower <= shed + 1e-12)
        assert np.array_equal(lower[exact_before], shed[exact_before])


@pytest.mark.parametrize("name,factor,rounds", [("ieee33", 1.0, 6), ("ieee33", 1.7, 6), ("ieee123", 1.4, 2)])
def test_lazy_select_equals_full_argmin(name, factor, rounds):
    net = _stressed(name, factor)
    rnd = np.random.default_rng(8)
    pyrnd = random.Random(8)
    for _ in range(rounds):
        failed = frozenset(pyrnd.sample(sorted(net.line_ids - net.fixed_open), pyrnd.randint(0, 2)))
        acts = feasible_configs(net, failed)
        if not acts:
            continue
        future = rnd.uniform(0, 2000, len(acts))
        lazy = CostModel(net, lambda t: 1000.0)
        i, costs = lazy.select(1, failed, acts, future, 1e-9)
        full = CostModel(net, lambda t: 1000.0).costs(1, failed, acts)
        assert i == tie_argmin(full + future, tie_rank(net, failed, acts))
        assert costs[i] == full[i]
