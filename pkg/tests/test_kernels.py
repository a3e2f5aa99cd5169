"""The compiled and pure-Python kernels must agree bit for bit, and both
must agree with direct reference computations."""

import random

import numpy as np
import pytest

from gridmdp import _pykernels, kernels
from gridmdp.grid import closed_masks, feasible_configs, is_radial, load_network

try:
    from gridmdp import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _arrays(net):
    return (np.array([l.r for l in net.lines]), np.array([l.x for l in net.lines]),
            np.array([b.p_load for b in net.buses]), np.array([b.q_load for b in net.buses]))


def _random_cases(net, n, seed):
    rnd = random.Random(seed)
    lines = sorted(net.line_ids - net.fixed_open)
    for _ in range(n):
        failed = frozenset(rnd.sample(lines, rnd.randint(0, 3)))
        acts = feasible_configs(net, failed)
        if acts:
            yield failed, tuple(rnd.sample(acts, min(12, len(acts))))


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if _ckernels is not None:
        assert kernels.BACKEND == "cython"


@needs_c
@pytest.mark.parametrize("name", ["toy_a", "toy_b", "hand4", "ieee33", "ieee123"])
def test_radial_masks_backends_agree(name):
    net = load_network(name)
    bi = net.bus_index
    base = [l for l in net.lines if not l.dispatchable and l.initially_closed]
    cands = [net.line(c) for c in net.dispatchable]
    args = (len(net.buses), net._is_sub,
            np.array([bi[l.from_bus] for l in base]), np.array([bi[l.to_bus] for l in base]),
            np.array([bi[l.from_bus] for l in cands]), np.array([bi[l.to_bus] for l in cands]))
    a, b = _pykernels.radial_masks(*args), _ckernels.radial_masks(*args)
    assert a.dtype == b.dtype == np.int64
    assert np.array_equal(a, b)


@pytest.mark.parametrize("name", ["toy_b", "ieee33"])
def test_radial_masks_match_is_radial(name):
    net = load_network(name)
    acts = set(feasible_configs(net))
    m = len(net.dispatchable)
    for bits in range(2 ** m):
        open_set = frozenset(c for i, c in enumerate(net.dispatchable) if (bits >> i) & 1)
        assert (open_set in acts) == is_radial(net, net.closed_lines(open_set))


@needs_c
@pytest.mark.parametrize("name", ["ieee33", "ieee123"])
def test_tree_sweep_backends_agree(name):
    net = load_network(name)
    r, x, p, q = _arrays(net)
    for failed, acts in _random_cases(net, 15, 1):
        masks = closed_masks(net, failed, acts)
        for row in masks:
            args = (len(net.buses), net._lf, net._lt, row, r, x, p, q, net._is_sub, net.base_mva)
            for u, v in zip(_pykernels.tree_sweep(*args), _ckernels.tree_sweep(*args)):
                assert np.array_equal(np.asarray(u), np.asarray(v))


def _reference_sweep(net, closed, p, q):
    """Flows as subtree load sums and voltages by walking down from the root."""
    adj = {b.id: [] for b in net.buses}
    for l in net.lines:
        if l.id in closed:
            adj[l.from_bus].append((l.to_bus, l))
            adj[l.to_bus].append((l.from_bus, l))
    order, parent = [], {}
    for s in sorted(net.substations):
        stack = [s]
        parent[s] = None
        while stack:
            k = stack.pop()
            order.append(k)
            for nb, l in adj[k]:
                if nb not in parent:
                    parent[nb] = (k, l)
                    stack.append(nb)
    load_p = {b.id: p[net.bus_index[b.id]] for b in net.buses}
    load_q = {b.id: q[net.bus_index[b.id]] for b in net.buses}
    sub_p, sub_q = dict(load_p), dict(load_q)
    for k in reversed(order):
        if parent[k] is not None:
            up = parent[k][0]
            sub_p[up] += sub_p[k]
            sub_q[up] += sub_q[k]
    flows, u = {}, {}
    for k in order:
        if parent[k] is None:
            u[k] = 1.0
            continue
        up, l = parent[k]
        sign = 1.0 if l.from_bus == up else -1.0
        flows[l.id] = (sign * sub_p[k], sign * sub_q[k])
        u[k] = u[up] - 2.0 * (l.r * sub_p[k] + l.x * sub_q[k]) / net.base_mva
    return set(order), flows, u


@pytest.mark.parametrize("name", ["toy_c", "ieee33", "ieee123"])
def test_tree_sweep_matches_reference(name):
    net = load_network(name)
    r, x, p, q = _arrays(net)
    for failed, acts in _random_cases(net, 10, 2):
        for a in acts:
            closed = net.closed_lines(a, failed)
            row = np.array([l.id in closed for l in net.lines], dtype=np.uint8)
            energized, fp, fq, u = kernels.tree_sweep(
                len(net.buses), net._lf, net._lt, row, r, x, p, q, net._is_sub, net.base_mva)
            ref_e, ref_f, ref_u = _reference_sweep(net, closed, p, q)
            assert {net.buses[k].id for k in range(len(net.buses)) if energized[k]} == ref_e
            for lid, (fpv, fqv) in ref_f.items():
                i = net.line_index[lid]
                assert fp[i] == pytest.approx(fpv, abs=1e-12)
                assert fq[i] == pytest.approx(fqv, abs=1e-12)
            for b, uv in ref_u.items():
                assert u[net.bus_index[b]] == pytest.approx(uv, abs=1e-12)


def _config_args(net, failed, acts, scale):
    r, x, p, q = _arrays(net)
    masks = closed_masks(net, failed, acts)
    return (len(net.buses), net._lf, net._lt, masks, r, x, p * scale, q * scale, net._is_sub,
            net.base_mva, np.array([l.s_max for l in net.lines]),
            np.array([b.v_min ** 2 for b in net.buses]), np.array([b.v_max ** 2 for b in net.buses]),
            1e-9)


@needs_c
@pytest.mark.parametrize("name,scale", [("ieee33", 1.0), ("ieee33", 1.4), ("ieee123", 1.3)])
def test_config_sweep_backends_agree(name, scale):
    net = load_network(name)
    for failed, acts in _random_cases(net, 20, 3):
        args = _config_args(net, failed, acts, scale)
        for u, v in zip(_pykernels.config_sweep(*args), _ckernels.config_sweep(*args)):
            assert np.array_equal(np.asarray(u), np.asarray(v))


@needs_c
@pytest.mark.parametrize("name", ["toy_a", "ieee33", "ieee123"])
def test_subtree_masks_backends_agree(name):
    net = load_network(name)
    cand = np.arange(len(net.lines), dtype=np.int64)
    for failed, acts in _random_cases(net, 15, 4):
        args = (len(net.buses), net._lf, net._lt, closed_masks(net, failed, acts), net._is_sub, cand)
        a, b = _pykernels.subtree_masks(*args), _ckernels.subtree_masks(*args)
        assert a.dtype == b.dtype == np.uint8
        assert np.array_equal(a, b)


@pytest.mark.parametrize("name", ["toy_b", "ieee33"])
def test_subtree_masks_match_reference(name):
    net = load_network(name)
    r, x, p, q = _arrays(net)
    cand = np.arange(len(net.lines), dtype=np.int64)
    for failed, acts in _random_cases(net, 8, 5):
        masks = closed_masks(net, failed, acts)
        sub = kernels.subtree_masks(len(net.buses), net._lf, net._lt, masks, net._is_sub, cand)
        for c, a in enumerate(acts):
            closed = net.closed_lines(a, failed)
            # a bus is downstream of a line when it loses supply with that line removed
            energized, _, _ = _reference_sweep(net, closed, p, q)
            for j, l in enumerate(net.lines):
                after, _, _ = _reference_sweep(net, closed - {l.id}, p, q)
                expect = energized - after if l.id in closed else set()
                got = {net.buses[k].id for k in np.flatnonzero(sub[c, j])}
                assert got == expect


@pytest.mark.parametrize("flag,expect", [("1", "python"), ("", None)])
def test_fallback_selected_by_environment(flag, expect):
    import os
    import subprocess
    import sys

    env = dict(os.environ, GRIDMDP_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", "from gridmdp import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == (expect or kernels.BACKEND)
