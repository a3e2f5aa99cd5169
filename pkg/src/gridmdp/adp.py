"""Post-decision-state approximate dynamic programming.

The value table maps post-decision states to smoothed cost-to-go estimates.
A post-decision state is keyed by its period, its outages and its exposure:
for every line that may fail next period, the buses fed through it under the
chosen switches. Open sets with the same exposure have the same successor
distribution, so they share one estimate. Training walks sample paths
forward: at each period the greedy action is chosen against the current
estimates, the previous post-decision estimate is smoothed toward the value
just observed, and a successor is sampled.

``multilinear_value`` and ``mccormick_chain`` are the binary-coded value
expansion and its exact linearization. Action selection here enumerates
actions and looks values up directly; those two functions are kept to check
that the two routes agree.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from gridmdp.dispatch import CostModel, DispatchError
from gridmdp.events import (
    MarkovState,
    Scenario,
    canonical_key,
    enumerate_successors,
    exposures,
    markov_state_update,
    path_rng,
    root_state,
    sample_transition,
)
from gridmdp.grid import Network, enumerate_actions

log = logging.getLogger(__name__)

TABLE_FORMAT = "gridmdp-value-table"
TABLE_VERSION = 1
TIE_RTOL = 1e-9


class PostDecisionState(NamedTuple):
    t: int
    failed: tuple
    isolated: tuple
    exposure: tuple  # ((line, buses fed through it), ...) for next period's at-risk lines

    @property
    def group(self) -> tuple:
        return (self.t, self.failed, self.isolated)


def post_decision(net: Network, state: MarkovState, action, scenario: Scenario) -> PostDecisionState:
    gkey = canonical_key(state, scenario)[:3]
    return PostDecisionState(*gkey, exposures(net, scenario, state, (frozenset(action),))[0])


def pds_label(net: Network, pds: PostDecisionState) -> str:
    fail = ",".join(net.line(l).label for l, _ in pds.failed) or "-"
    exposed = ",".join(f"{net.line(l).label}:{len(b)}" for l, b in pds.exposure if b) or "-"
    return f"t{pds.t}|failed={fail}|exposed={exposed}"


@dataclass
class ADPConfig:
    iterations: int = 1500
    stepsize: str = "constant"  # or "harmonic"
    epsilon: float = 0.1
    harmonic_a: float = 20.0
    explore: float = 0.0
    initial_value: float = 0.0
    initial: str = "zero"  # or "rollout"
    update: str = "sample"  # or "expected"
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.stepsize not in ("constant", "harmonic"):
            raise ValueError("stepsize must be 'constant' or 'harmonic'")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        if self.harmonic_a <= 0:
            raise ValueError("harmonic_a must be positive")
        if not 0.0 <= self.explore < 1.0:
            raise ValueError("explore must be in [0, 1)")
        if self.initial_value < 0:
            raise ValueError("initial_value must be >= 0")
        if self.initial not in ("zero", "rollout"):
            raise ValueError("initial must be 'zero' or 'rollout'")
        if self.update not in ("sample", "expected"):
            raise ValueError("update must be 'sample' or 'expected'")

    def step(self, visits: int) -> float:
        if self.stepsize == "harmonic":
            return self.harmonic_a / (self.harmonic_a + visits)
        return self.epsilon


class _Group:
    """Estimates of one ``(t, failed, isolated)`` group.

    ``default`` is the starting value of entries not yet updated; ``None``
    means it has not been fixed yet (a group rebuilt from a file).
    """

    __slots__ = ("keys", "index", "values", "visits", "default")

    def __init__(self, keys, default):
        self.keys = tuple(keys)
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.default = default
        self.values = np.full(len(self.keys), 0.0 if default is None else float(default))
        self.visits = np.zeros(len(self.keys), dtype=np.int64)

    def realign(self, keys, default):
        keys = tuple(keys)
        known = set(keys)
        extra = [k for k in self.keys if k not in known]
        g = _Group(keys + tuple(extra), default)
        for k, i in self.index.items():
            if self.visits[i] > 0 or self.default is not None:
                j = g.index[k]
                g.values[j] = self.values[i]
                g.visits[j] = self.visits[i]
        return g


class ValueTable:
    """Post-decision value estimates with visit counts.

    Entries are grouped by ``(t, failed, isolated)`` so that a whole action
    set can be looked up as one array. Entries never updated hold the
    table's ``default``, or the value returned by the ``init`` callback
    passed to :meth:`values_for` when their group is first looked up.
    """

    def __init__(self, default: float = 0.0, header: dict | None = None):
        self.default = float(default)
        self.header = dict(header or {})
        self._groups: dict = {}
        self.misses = 0

    def __len__(self):
        return int(sum((g.visits > 0).sum() for g in self._groups.values()))

    def _start(self, g):
        return self.default if g is None or g.default is None else g.default

    def get(self, pds: PostDecisionState) -> float:
        g = self._groups.get(pds.group)
        if g is None or pds.exposure not in g.index:
            return self._start(g)
        return float(g.values[g.index[pds.exposure]])

    def visits(self, pds: PostDecisionState) -> int:
        g = self._groups.get(pds.group)
        if g is None or pds.exposure not in g.index:
            return 0
        return int(g.visits[g.index[pds.exposure]])

    def set(self, pds: PostDecisionState, value: float, visits: int = 1) -> None:
        g = self._groups.get(pds.group)
        if g is None:
            g = _Group((pds.exposure,), None)
            self._groups[pds.group] = g
        elif pds.exposure not in g.index:
            g = g.realign(g.keys + (pds.exposure,), g.default)
            self._groups[pds.group] = g
        i = g.index[pds.exposure]
        g.values[i] = value
        g.visits[i] = visits

    def update(self, pds: PostDecisionState, observed: float, epsilon: float) -> float:
        """Exponential smoothing ``(1 - eps) * old + eps * observed``."""
        if observed < 0:
            raise ValueError("observed value must be >= 0")
        if not 0.0 < epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        g = self._groups.get(pds.group)
        if g is None or pds.exposure not in g.index:
            start = self._start(g)
            self.set(pds, start, 0)
            g = self._groups[pds.group]
            if g.default is None:
                g.default = start
        i = g.index[pds.exposure]
        g.values[i] = (1.0 - epsilon) * g.values[i] + epsilon * observed
        g.visits[i] += 1
        return float(g.values[i])

    def values_for(self, gkey: tuple, keys: tuple, init=None) -> np.ndarray:
        """Estimates aligned with ``keys`` (exposure tuples) for one group.

        ``init`` is called at most once per group to supply the starting
        value of entries that have never been updated.
        """
        g = self._groups.get(gkey)
        if g is not None and g.default is not None and g.keys[: len(keys)] == keys:
            return g.values[: len(keys)]
        default = g.default if g is not None and g.default is not None else (
            float(init()) if init is not None else self.default)
        if g is None:
            g = _Group(keys, default)
        else:
            g = g.realign(keys, default)
        self._groups[gkey] = g
        return g.values[: len(keys)]

    def visits_for(self, gkey: tuple, keys: tuple) -> np.ndarray:
        g = self._groups.get(gkey)
        if g is None:
            return np.zeros(len(keys), dtype=np.int64)
        if g.keys[: len(keys)] != keys:
            g = g.realign(keys, g.default)
            self._groups[gkey] = g
        return g.visits[: len(keys)]

    def items(self):
        """Visited entries as ``(pds, value, visits)``, canonically ordered."""
        out = []
        for gkey, g in self._groups.items():
            for k, i in g.index.items():
                if g.visits[i] > 0:
                    out.append((PostDecisionState(*gkey, k), float(g.values[i]), int(g.visits[i])))
        out.sort(key=lambda e: _sort_key(e[0]))
        return out

    # -- persistence -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "header": self.header,
            "default": self.default,
            "entries": [
                {"t": p.t, "failed": [list(f) for f in p.failed],
                 "isolated": [[l, list(c)] for l, c in p.isolated],
                 "exposure": [[l, list(b)] for l, b in p.exposure], "value": v, "visits": n}
                for p, v, n in self.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValueTable":
        if data.get("format") != TABLE_FORMAT:
            raise ValueError("not a value-table file")
        if data.get("version") != TABLE_VERSION:
            raise ValueError(f"unsupported value-table version {data.get('version')}")
        vt = cls(default=data.get("default", 0.0), header=data.get("header", {}))
        for e in data["entries"]:
            pds = PostDecisionState(
                int(e["t"]),
                tuple((int(l), int(tf)) for l, tf in e["failed"]),
                tuple((int(l), tuple(int(c) for c in cs)) for l, cs in e["isolated"]),
                tuple((int(l), tuple(int(b) for b in bs)) for l, bs in e["exposure"]),
            )
            vt.set(pds, float(e["value"]), int(e["visits"]))
        return vt

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ValueTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sort_key(p: PostDecisionState):
    return (p.t, p.failed, p.isolated, p.exposure)


def value_update(vt: ValueTable, pds: PostDecisionState, observed: float, epsilon: float) -> float:
    return vt.update(pds, observed, epsilon)


def tie_argmin(totals: np.ndarray, rank: np.ndarray | None = None) -> int:
    """Index of the minimum; entries within a relative tolerance of it tie.

    Ties go to the lowest ``rank`` (see :func:`gridmdp.grid.tie_rank`), or
    to the first index when no rank is given.
    """
    best = float(np.min(totals))
    if not np.isfinite(best):
        raise DispatchError("no action with a finite cost")
    band = np.flatnonzero(totals <= best + TIE_RTOL * abs(best))
    return int(band[0] if rank is None else band[np.argmin(rank[band])])


class _Keys:
    """Post-decision states of an action list, built on demand."""

    __slots__ = ("gkey", "keys", "slot")

    def __init__(self, gkey, keys, slot):
        self.gkey, self.keys, self.slot = gkey, keys, slot

    def __len__(self):
        return len(self.slot)

    def __getitem__(self, i) -> PostDecisionState:
        return PostDecisionState(*self.gkey, self.keys[self.slot[i]])


class Policy:
    """Greedy action selection against a value table, with cached costs.

    ``initial`` chooses the starting value of post-decision states that the
    table has never updated: ``"zero"`` uses the table default, while
    ``"rollout"`` uses the cost of the remaining periods if no further line
    fails (outstanding repairs still complete), acting myopically.
    """

    def __init__(self, net: Network, scenario: Scenario, vt: ValueTable,
                 cost_model: CostModel | None = None, initial: str = "zero"):
        self.net = net
        self.scenario = scenario
        self.vt = vt
        self.costs = cost_model or CostModel(net, scenario.eta_at, scenario.dt)
        self.initial = initial
        self._actions = {}
        self._keys = {}
        self._rollout = {}

    def continuation(self, state: MarkovState) -> float:
        """Myopic cost of periods ``t+1..T`` with no new failures."""
        T = self.scenario.horizon
        chain = []
        cur = state
        total = 0.0
        while cur.t < T:
            key = canonical_key(cur, self.scenario)[:3]
            if key in self._rollout:
                total = self._rollout[key]
                break
            chain.append(key)
            nxt = markov_state_update(cur, (), self.scenario, self.net)
            actions = self.actions(nxt)
            i, costs = self.costs.select(nxt.t, nxt.unavailable, actions, np.zeros(len(actions)), TIE_RTOL)
            chain.append(float(costs[i]))
            cur = nxt.with_action(actions[i])
        for item in reversed(chain):
            if isinstance(item, float):
                total += item
            else:
                self._rollout[item] = total
        return self._rollout.get(canonical_key(state, self.scenario)[:3], total)

    def actions(self, state: MarkovState) -> tuple:
        unavailable = state.unavailable
        hit = self._actions.get(unavailable)
        if hit is None:
            hit = enumerate_actions(self.net, state)
            self._actions[unavailable] = hit
        return hit

    def action_set(self, state: MarkovState):
        """``(actions, keys, slot)``: distinct exposures and each action's index into them."""
        actions = self.actions(state)
        ck = (state.t, state.unavailable, state.failed_lines)
        hit = self._keys.get(ck)
        if hit is None:
            sig = exposures(self.net, self.scenario, state, actions)
            index = {}
            slot = np.array([index.setdefault(e, len(index)) for e in sig], dtype=np.intp)
            hit = (actions, tuple(index), slot)
            self._keys[ck] = hit
        return hit

    def future(self, state: MarkovState, keys: tuple, slot: np.ndarray):
        gkey = canonical_key(state, self.scenario)[:3]
        if state.t >= self.scenario.horizon:
            return np.zeros(len(slot)), gkey
        init = (lambda: self.continuation(state)) if self.initial == "rollout" else None
        return self.vt.values_for(gkey, keys, init)[slot], gkey

    def choose(self, state: MarkovState):
        """Greedy index with exact costs where they matter.

        Returns ``(actions, pds, index, costs, future)`` where ``pds`` lists
        each action's post-decision state. ``costs`` is exact at ``index``
        and a lower bound wherever the LP was not needed.
        """
        actions, keys, slot = self.action_set(state)
        if not actions:
            raise DispatchError(f"no feasible reconfiguration at period {state.t}")
        future, gkey = self.future(state, keys, slot)
        i, costs = self.costs.select(state.t, state.unavailable, actions, future, TIE_RTOL)
        return actions, _Keys(gkey, keys, slot), i, costs, future

    def evaluate(self, state: MarkovState):
        """Exact immediate costs and future estimates for every action."""
        actions, keys, slot = self.action_set(state)
        if not actions:
            raise DispatchError(f"no feasible reconfiguration at period {state.t}")
        costs = self.costs.costs(state.t, state.unavailable, actions)
        future, gkey = self.future(state, keys, slot)
        return actions, _Keys(gkey, keys, slot), costs, future

    def best(self, state: MarkovState) -> float:
        """``min_a C(state, a) + v(post-decision state)`` under the current table."""
        _, _, i, costs, future = self.choose(state)
        return float(costs[i] + future[i])

    def visited(self, pds) -> bool:
        return self.vt.visits(pds) > 0

    def select(self, state: MarkovState):
        actions, pds, i, costs, future = self.choose(state)
        if state.t < self.scenario.horizon and not self.visited(pds[i]):
            self.vt.misses += 1
        info = {
            "immediate": float(costs[i]),
            "future": float(future[i]),
            "n_actions": len(actions),
            "index": i,
        }
        return actions[i], float(costs[i] + future[i]), info


def bellman_action_select(net: Network, state: MarkovState, vt: ValueTable, scenario: Scenario,
                          cost_model: CostModel | None = None):
    """Greedy action: minimize immediate cost plus post-decision estimate.

    The table header's ``initial`` setting, if any, selects how unvisited
    states are valued. Returns ``(action, value, breakdown)``. Totals within
    a relative 1e-9 tie; ties go to the action closest to the normal
    configuration, then to the canonically first. Actions whose dispatch
    fails carry an infinite cost and are never chosen.
    """
    return Policy(net, scenario, vt, cost_model, table_initial(vt)).select(state)


def table_initial(vt: ValueTable) -> str:
    """Initialization mode a table was trained with (``"zero"`` if unknown)."""
    return vt.header.get("config", {}).get("initial", "zero")


@dataclass
class TraceRow:
    iteration: int
    probe: str
    estimate: float


def train(net: Network, scenario: Scenario, config: ADPConfig, probes=(),
          cost_model: CostModel | None = None, vt: ValueTable | None = None):
    """Forward ADP over ``config.iterations`` sample paths.

    ``probes`` is a sequence of ``(label, PostDecisionState)`` whose estimates
    are recorded after every iteration. Returns ``(ValueTable, trace)``.

    With ``config.update == "sample"`` the previous post-decision estimate is
    smoothed toward the value of the sampled successor. With ``"expected"``
    it is smoothed toward the probability-weighted value of every successor
    outcome, which removes the sampling noise of rare failures; the sampled
    successor still decides where the path goes.
    """
    scenario.validate(net)
    if vt is None:
        vt = ValueTable(default=config.initial_value)
    vt.header.update({
        "network": net.digest(),
        "scenario": scenario.digest(),
        "config": asdict(config),
        "seed": config.seed,
    })
    policy = Policy(net, scenario, vt, cost_model, config.initial)
    root = root_state(net)
    root_pds = post_decision(net, root, root.open_dispatchable, scenario)
    T = scenario.horizon
    expected = config.update == "expected"
    successors = {}  # canonical post-decision key -> [(probability, next state)]
    trace = []
    for n in range(config.iterations):
        rng = path_rng(config.seed, n)
        xrng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, n, 1])))
        prev = root_pds
        prev_state = root
        state = sample_transition(root, root.open_dispatchable, scenario, rng, net)
        for t in range(1, T + 1):
            actions, pds, i, costs, future = policy.choose(state)
            if expected:
                ck = canonical_key(prev_state, scenario)
                outcomes = successors.get(ck)
                if outcomes is None:
                    outcomes = [(tr.probability, tr.successor) for tr in
                                enumerate_successors(prev_state, prev_state.open_dispatchable, scenario, net)]
                    successors[ck] = outcomes
                observed = math.fsum(pr * policy.best(s) for pr, s in outcomes)
            else:
                observed = float(costs[i] + future[i])
            vt.update(prev, observed, config.step(vt.visits(prev)))
            if config.explore and xrng.random() < config.explore:
                j = int(xrng.integers(len(actions)))
                policy.costs.resolve(state.unavailable, actions, [j])
                if np.isfinite(policy.costs.bounds(state.unavailable, actions)[0][j]):
                    i = j
            prev = pds[i]
            prev_state = state.with_action(actions[i])
            if t < T:
                state = sample_transition(state, actions[i], scenario, rng, net)
        for label, pds in probes:
            trace.append(TraceRow(n + 1, label, vt.get(pds)))
    return vt, trace


def converged_value(trace, probe: str, tail: float = 0.2) -> float:
    """Mean estimate of a probe over the final ``tail`` fraction of iterations."""
    vals = [r.estimate for r in trace if r.probe == probe]
    if not vals:
        raise KeyError(probe)
    k = max(1, int(round(len(vals) * tail)))
    return float(np.mean(vals[-k:]))


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "probe_state", "estimate"])
        for r in trace:
            w.writerow([r.iteration, r.probe, repr(r.estimate)])


def read_trace(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TraceRow(int(r["iteration"]), r["probe_state"], float(r["estimate"])) for r in rows]


# -- verification kernels -----------------------------------------------------

def binary_matrix(m: int) -> np.ndarray:
    """All binary m-vectors, row ``i`` being ``i`` in binary (first column most significant)."""
    return np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64).reshape(2 ** m, m)


def multilinear_value(beta, b_matrix, values) -> float:
    """Sum over rows ``i`` of ``prod_l (1 - beta_l - b[i,l]) (1 - 2 b[i,l]) * V_i``.

    For binary ``beta`` every row but the matching one vanishes, so this is a
    table lookup written as a polynomial in the line statuses.
    """
    beta = np.asarray(beta, dtype=np.int64)
    b = np.asarray(b_matrix, dtype=np.int64)
    v = np.asarray(values, dtype=float)
    m = beta.shape[0]
    if b.shape != (2 ** m, m) or v.shape != (2 ** m,):
        raise ValueError(f"expected b_matrix {(2 ** m, m)} and values {(2 ** m,)}")
    if len({tuple(r) for r in b.tolist()}) != 2 ** m or not np.isin(b, (0, 1)).all():
        raise ValueError("b_matrix rows must enumerate every binary vector once")
    total = 0.0
    for i in range(2 ** m):
        coef = 1
        for l in range(m):
            coef *= (1 - int(beta[l]) - int(b[i, l])) * (1 - 2 * int(b[i, l]))
        total += coef * v[i]
    return total


@dataclass
class McCormickReport:
    y: list  # y_2..y_m
    product: int
    residuals: list  # (description, lhs - rhs slack >= 0 when satisfied)

    @property
    def feasible(self) -> bool:
        return all(s >= 0 for _, s in self.residuals)

    @property
    def exact(self) -> bool:
        return self.y[-1] == self.product


def mccormick_residuals(beta, y) -> list:
    """Slack of each chained-product inequality; all >= 0 iff feasible.

    ``y`` holds ``y_2..y_m``.
    """
    beta = [int(b) for b in beta]
    m = len(beta)
    if m < 2 or len(y) != m - 1:
        raise ValueError("need m >= 2 and len(y) == m - 1")
    yy = {l: y[l - 2] for l in range(2, m + 1)}
    out = [
        ("y2 >= b2 + b1 - 1", yy[2] - (beta[1] + beta[0] - 1)),
        ("y2 <= b1", beta[0] - yy[2]),
    ]
    for l in range(2, m + 1):
        out.append((f"y{l} >= 0", yy[l]))
        out.append((f"y{l} <= b{l}", beta[l - 1] - yy[l]))
    for l in range(3, m + 1):
        out.append((f"y{l} >= b{l} + y{l - 1} - 1", yy[l] - (beta[l - 1] + yy[l - 1] - 1)))
        out.append((f"y{l} <= y{l - 1}", yy[l - 1] - yy[l]))
    return out


def mccormick_chain(beta) -> McCormickReport:
    """Chain ``y_l = y_{l-1} * beta_l`` and check its linear constraints."""
    beta = [int(b) for b in beta]
    if len(beta) < 2:
        raise ValueError("need at least two binaries")
    y = [beta[0] * beta[1]]
    for b in beta[2:]:
        y.append(y[-1] * b)
    return McCormickReport(y=y, product=int(np.prod(beta)), residuals=mccormick_residuals(beta, y))
