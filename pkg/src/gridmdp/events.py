"""Storm scenarios, Markov-state bookkeeping and transition laws.

A Markov state at period ``t`` records the lines out of service and the
current open set of dispatchable lines. Two kinds of outage are tracked:

* ``failed``: lines damaged by the storm, with the period they failed in;
* ``isolated``: in-service lines inside an area that a failure cut off while
  it was energized. They cannot be used until every line that caused the
  cut-off is repaired. This is what makes pre-emptive switching valuable:
  a line that is already open when it fails isolates nothing.

Period ``0`` is the pre-storm post-decision state (the initial switch
configuration); storm outcomes start at period 1.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gridmdp import kernels
from gridmdp.grid import Network, closed_masks, energization, resolve_data_path

MAX_OUTCOME_LINES = 20


class ScenarioError(ValueError):
    pass


class OutcomeSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    horizon: int
    dt: float = 1.0
    eta: tuple = (1000.0,)
    at_risk: dict = field(default_factory=dict)  # period -> ((line, p), ...)
    repairs: dict = field(default_factory=dict)  # line -> duration in periods
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise ScenarioError("horizon must be >= 1")
        if self.dt <= 0:
            raise ScenarioError("dt_hours must be positive")
        eta = tuple(float(e) for e in self.eta)
        if len(eta) == 1:
            eta = eta * self.horizon
        if len(eta) != self.horizon:
            raise ScenarioError(f"eta needs 1 or {self.horizon} entries, got {len(eta)}")
        if any(e <= 0 for e in eta):
            raise ScenarioError("eta must be positive")
        object.__setattr__(self, "eta", eta)
        risk = {}
        for t, entries in self.at_risk.items():
            t = int(t)
            if not 1 <= t <= self.horizon:
                raise ScenarioError(f"at-risk period {t} outside 1..{self.horizon}")
            seen = {}
            for line, p in entries:
                p = float(p)
                if not 0.0 <= p <= 1.0:
                    raise ScenarioError(f"period {t}, line {line}: probability {p} not in [0, 1]")
                seen[int(line)] = p
            risk[t] = tuple(sorted(seen.items()))
        object.__setattr__(self, "at_risk", risk)
        reps = {}
        for line, d in self.repairs.items():
            if d is None:
                continue
            if int(d) < 1:
                raise ScenarioError(f"repair duration for line {line} must be >= 1")
            reps[int(line)] = int(d)
        object.__setattr__(self, "repairs", reps)

    def eta_at(self, t: int) -> float:
        return self.eta[t - 1]

    def risk_at(self, t: int) -> tuple:
        return self.at_risk.get(t, ())

    def validate(self, net: Network) -> None:
        for t, entries in self.at_risk.items():
            for line, _ in entries:
                if line not in net.line_index:
                    raise ScenarioError(f"period {t}: at-risk line {line} not in network")
        for line in self.repairs:
            if line not in net.line_index:
                raise ScenarioError(f"repair entry for unknown line {line}")

    def with_rate(self, p: float) -> "Scenario":
        """Copy with every at-risk probability replaced by ``p``."""
        risk = {t: tuple((l, p) for l, _ in v) for t, v in self.at_risk.items()}
        return Scenario(self.horizon, self.dt, self.eta, risk, self.repairs, self.seed, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "horizon": self.horizon,
            "dt_hours": self.dt,
            "eta": list(self.eta),
            "seed": self.seed,
            "periods": [{"t": t, "at_risk": [{"line": l, "p_fail": p} for l, p in v]}
                        for t, v in sorted(self.at_risk.items())],
            "repairs": {str(l): d for l, d in sorted(self.repairs.items())},
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def scenario_from_dict(data: dict, name: str = "", net: Network | None = None) -> Scenario:
    def line_id(v):
        if isinstance(v, str) and "-" in v:
            if net is None:
                raise ScenarioError(f"line label {v!r} needs a network to resolve")
            return net.line_by_label(v).id
        return int(v)

    try:
        horizon = int(data["horizon"])
        eta = data.get("eta", 1000.0)
        eta = (eta,) if isinstance(eta, (int, float)) else tuple(eta)
        risk = {}
        for entry in data.get("periods", []):
            risk[int(entry["t"])] = [(line_id(a["line"]), a["p_fail"]) for a in entry.get("at_risk", [])]
        repairs = {line_id(k): v for k, v in data.get("repairs", {}).items()}
        sc = Scenario(horizon=horizon, dt=float(data.get("dt_hours", 1.0)), eta=eta, at_risk=risk,
                      repairs=repairs, seed=int(data.get("seed", 0)), name=name or data.get("name", ""))
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc}") from None
    if net is not None:
        sc.validate(net)
    return sc


def load_scenario(path, net: Network | None = None) -> Scenario:
    path = resolve_data_path(path)
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(data, name=Path(path).stem, net=net)


@dataclass(frozen=True)
class MarkovState:
    """Outage state and switch configuration at a period.

    ``failed`` is a sorted tuple of ``(line, failure_period)``; ``isolated``
    a sorted tuple of ``(line, causes)`` with ``causes`` a sorted tuple of
    failed lines. ``open_dispatchable`` is the current open set. Used for
    pre-decision states and, with the chosen open set, post-decision states.
    """

    t: int
    failed: tuple = ()
    isolated: tuple = ()
    open_dispatchable: frozenset = frozenset()

    def __post_init__(self):
        if isinstance(self.failed, dict):
            object.__setattr__(self, "failed", tuple(sorted(self.failed.items())))
        if isinstance(self.isolated, dict):
            object.__setattr__(self, "isolated",
                               tuple(sorted((l, tuple(sorted(c))) for l, c in self.isolated.items())))
        object.__setattr__(self, "open_dispatchable", frozenset(self.open_dispatchable))
        for _, tf in self.failed:
            if tf > self.t:
                raise ValueError("failure period after current period")
        if self.open_dispatchable & self.unavailable:
            raise ValueError("out-of-service lines cannot be in the open set")

    @property
    def failed_lines(self) -> frozenset:
        return frozenset(l for l, _ in self.failed)

    @property
    def isolated_lines(self) -> frozenset:
        return frozenset(l for l, _ in self.isolated)

    @property
    def unavailable(self) -> frozenset:
        return self.failed_lines | self.isolated_lines

    def with_action(self, action) -> "MarkovState":
        return MarkovState(self.t, self.failed, self.isolated, frozenset(action))


def root_state(net: Network) -> MarkovState:
    """Pre-storm post-decision state: period 0, nothing out, initial switches."""
    return MarkovState(0, (), (), net.initial_open)


def _repair_due(line: int, tf: int, t: int, scenario: Scenario) -> bool:
    d = scenario.repairs.get(line)
    return d is not None and t >= tf + d


def markov_state_update(state: MarkovState, new_failures, scenario: Scenario,
                        net: Network | None = None) -> MarkovState:
    """Advance a post-decision state to period ``t + 1``.

    New failures are added, repairs due at ``t + 1`` are removed (a failure
    at ``T_f`` with duration ``d`` is back in service from ``T_f + d``).
    With a network, buses that the new failures cut off under the current
    switch configuration become isolated. Repaired and released dispatchable
    lines come back open; non-dispatchable ones return to normal status.
    """
    new_failures = frozenset(int(l) for l in new_failures)
    t1 = state.t + 1
    if new_failures & state.failed_lines:
        raise ValueError(f"lines {sorted(new_failures & state.failed_lines)} already failed")
    failed = dict(state.failed)
    isolated = {l: set(c) for l, c in state.isolated}
    for l in new_failures:
        failed[l] = t1
        isolated.pop(l, None)

    if net is not None and new_failures:
        before_out = state.unavailable
        closed = net.closed_lines(state.open_dispatchable, before_out)
        _isolate(net, closed, before_out, new_failures, failed, isolated)

    repaired = {l for l, tf in failed.items() if _repair_due(l, tf, t1, scenario)}
    for l in repaired:
        del failed[l]
    released = set()
    for l, causes in list(isolated.items()):
        if not (causes & failed.keys()):
            released.add(l)
            del isolated[l]

    open_set = set(state.open_dispatchable) - new_failures - set(isolated)
    if net is not None:
        for l in repaired | released:
            if net.line(l).dispatchable:
                open_set.add(l)
    else:
        open_set |= repaired | released
    return MarkovState(t1, failed, {l: c for l, c in isolated.items()}, frozenset(open_set))


def _isolate(net, closed, before_out, new_failures, failed, isolated):
    topo0 = energization(net, closed, before_out)
    topo1 = energization(net, closed, before_out | new_failures)
    lost = topo0.energized_buses - topo1.energized_buses
    if not lost:
        return
    # parent pointers of the pre-failure radial tree, to find the cutting line
    adj = {b.id: [] for b in net.buses}
    for lid in topo0.closed_lines:
        l = net.line(lid)
        adj[l.from_bus].append((l.to_bus, lid))
        adj[l.to_bus].append((l.from_bus, lid))
    par = {}
    todo = sorted(net.substations)
    seen = set(todo)
    while todo:
        k = todo.pop()
        for nb, lid in sorted(adj[k]):
            if nb not in seen:
                seen.add(nb)
                par[nb] = (k, lid)
                todo.append(nb)
    cause_of = {}
    for b in lost:
        k, cause = b, None
        while k in par:
            k, lid = par[k]
            if lid in new_failures:
                cause = lid
        cause_of[b] = cause
    for l in net.lines:
        if l.id in failed or l.id in new_failures:
            continue
        causes = {cause_of[b] for b in (l.from_bus, l.to_bus) if b in cause_of}
        if causes:
            isolated.setdefault(l.id, set()).update(causes)


@dataclass(frozen=True)
class Transition:
    successor: MarkovState
    probability: float
    failures: frozenset = frozenset()


def _candidates(state: MarkovState, scenario: Scenario) -> tuple:
    failed = state.failed_lines
    return tuple((l, p) for l, p in scenario.risk_at(state.t + 1) if l not in failed)


def transition_probability(state: MarkovState, action, successor_failures, scenario: Scenario) -> float:
    """Probability that exactly ``successor_failures`` fail at ``t + 1``.

    Switching and repairs are deterministic and contribute a factor of 1.
    """
    successor_failures = frozenset(successor_failures)
    cands = _candidates(state, scenario)
    if not successor_failures <= {l for l, _ in cands}:
        return 0.0
    prob = 1.0
    for l, p in cands:
        prob *= p if l in successor_failures else 1.0 - p
    return prob


def enumerate_successors(state: MarkovState, action, scenario: Scenario,
                         net: Network | None = None) -> list:
    """All next states with positive probability after taking ``action``."""
    pds = state.with_action(action)
    if state.t >= scenario.horizon:
        return []
    cands = _candidates(state, scenario)
    sure = frozenset(l for l, p in cands if p >= 1.0)
    uncertain = [(l, p) for l, p in cands if 0.0 < p < 1.0]
    if len(uncertain) > MAX_OUTCOME_LINES:
        raise OutcomeSpaceError(f"{len(uncertain)} uncertain at-risk lines exceed {MAX_OUTCOME_LINES}")
    out = []
    for bits in itertools.product((False, True), repeat=len(uncertain)):
        prob = 1.0
        fails = set(sure)
        for (l, p), hit in zip(uncertain, bits):
            if hit:
                prob *= p
                fails.add(l)
            else:
                prob *= 1.0 - p
        fails = frozenset(fails)
        out.append(Transition(markov_state_update(pds, fails, scenario, net), prob, fails))
    return out


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one sample path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def draw_failures(state: MarkovState, scenario: Scenario, rng: np.random.Generator) -> frozenset:
    """One uniform per listed at-risk line, so draw positions do not depend on history."""
    risk = scenario.risk_at(state.t + 1)
    if not risk:
        return frozenset()
    u = rng.random(len(risk))
    failed = state.failed_lines
    return frozenset(l for (l, p), ui in zip(risk, u) if ui < p and l not in failed)


def sample_transition(state: MarkovState, action, scenario: Scenario, rng: np.random.Generator,
                      net: Network | None = None) -> MarkovState:
    pds = state.with_action(action)
    return markov_state_update(pds, draw_failures(pds, scenario, rng), scenario, net)


def canonical_key(state: MarkovState, scenario: Scenario) -> tuple:
    """Hashable key that merges states with identical futures.

    Failure periods only matter for lines whose repair can still complete
    within the horizon, so other failure periods are dropped.
    """
    failed = tuple(
        (l, tf if l in scenario.repairs and tf + scenario.repairs[l] <= scenario.horizon else 0)
        for l, tf in state.failed
    )
    return (state.t, failed, state.isolated, tuple(sorted(state.open_dispatchable)))


def probability_sum(transitions) -> float:
    return math.fsum(tr.probability for tr in transitions)


def _candidates_next(state: MarkovState, scenario: Scenario) -> tuple:
    failed = state.failed_lines
    return tuple(l for l, p in scenario.risk_at(state.t + 1) if p > 0.0 and l not in failed)


def exposure(net: Network, scenario: Scenario, state: MarkovState, action) -> tuple:
    """What the next period's storm can cut off under ``action``.

    For each line that may fail at ``t + 1``, the sorted buses fed through
    it (empty if it is open or not energized). The successor distribution
    of a post-decision state depends on the open set only through this
    signature, so states that share it have the same expected cost-to-go.
    """
    return exposures(net, scenario, state, (action,))[0]


def exposures(net: Network, scenario: Scenario, state: MarkovState, actions) -> list:
    """:func:`exposure` for each of ``actions``."""
    if state.t >= scenario.horizon:
        return [()] * len(actions)
    cands = _candidates_next(state, scenario)
    if not cands or not actions:
        return [()] * len(actions)
    sub = kernels.subtree_masks(
        len(net.buses), net._lf, net._lt, closed_masks(net, state.unavailable, actions),
        net._is_sub, np.array([net.line_index[l] for l in cands], dtype=np.int64))
    ids = np.array([b.id for b in net.buses])
    order = np.argsort(ids, kind="stable")
    sub = sub[:, :, order]
    sorted_ids = ids[order]
    memo = {}
    out = []
    for row in sub:
        raw = row.tobytes()
        sig = memo.get(raw)
        if sig is None:
            sig = tuple((l, tuple(int(b) for b in sorted_ids[row[j].astype(bool)]))
                        for j, l in enumerate(cands))
            memo[raw] = sig
        out.append(sig)
    return out
