"""Exact DP oracle, Monte Carlo policy evaluation and the case-study drivers."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from gridmdp.adp import (
    TIE_RTOL,
    ADPConfig,
    Policy,
    PostDecisionState,
    ValueTable,
    converged_value,
    pds_label,
    post_decision,
    table_initial,
    tie_argmin,
    train,
)
from gridmdp.dispatch import CostModel
from gridmdp.events import (
    MarkovState,
    Scenario,
    canonical_key,
    draw_failures,
    enumerate_successors,
    load_scenario,
    markov_state_update,
    path_rng,
    root_state,
)
from gridmdp.grid import Network, enumerate_actions, load_network, resolve_data_path, tie_rank

log = logging.getLogger(__name__)

STATE_CAP = 10 ** 6


class StateSpaceError(RuntimeError):
    """The exact DP would enumerate more states than the configured cap."""


def _labels(net: Network, lines) -> list:
    return [net.line(l).label for l in sorted(lines)]


# -- exact dynamic programming --------------------------------------------------

@dataclass
class DPResult:
    post_values: dict  # canonical post-decision key -> expected cost-to-go
    pre_values: dict  # (t, failed, isolated) -> optimal value
    policy: dict  # (t, failed, isolated) -> optimal open set
    root_value: float
    root_key: tuple
    n_states: int
    header: dict = field(default_factory=dict)

    def value_table(self, net: Network, scenario: Scenario) -> ValueTable:
        """The exact values in value-table form, keyed by exposure."""
        vt = ValueTable(header=dict(self.header, source="exact_dp"))
        for key, v in sorted(self.post_values.items()):
            state = MarkovState(key[0], key[1], key[2], key[3])
            vt.set(post_decision(net, state, key[3], scenario), v, 1)
        return vt


def _uncertain(state: MarkovState, scenario: Scenario) -> int:
    failed = state.failed_lines
    return sum(1 for l, p in scenario.risk_at(state.t + 1) if l not in failed and 0.0 < p < 1.0)


def exact_dp(net: Network, scenario: Scenario, cap: int = STATE_CAP,
             cost_model: CostModel | None = None) -> DPResult:
    """Backward induction over every reachable state.

    States are enumerated forward period by period. Before each expansion
    the number of outcomes about to be enumerated is added to the running
    count of states, and the run stops with :class:`StateSpaceError` once
    that count would pass ``cap``.
    """
    scenario.validate(net)
    cm = cost_model or CostModel(net, scenario.eta_at, scenario.dt)
    T = scenario.horizon
    root = root_state(net)
    root_key = canonical_key(root, scenario)
    count = 2 ** _uncertain(root, scenario)
    if count > cap:
        raise StateSpaceError(f"state count exceeds cap of {cap}")

    # forward enumeration
    trans = {}  # pds key -> [(prob, next group)]
    reps = {}  # group -> representative pre-decision state
    choices = {}  # group -> [(action, pds key)]
    level = {}
    trans[root_key] = []
    for tr in enumerate_successors(root, root.open_dispatchable, scenario, net):
        g = canonical_key(tr.successor, scenario)[:3]
        level.setdefault(g, tr.successor)
        trans[root_key].append((tr.probability, g))
    for t in range(1, T + 1):
        reps.update(level)
        nxt = {}
        pending = []
        for g, state in level.items():
            acts = enumerate_actions(net, state)
            choices[g] = []
            for a in acts:
                pstate = state.with_action(a)
                key = canonical_key(pstate, scenario)
                choices[g].append((a, key))
                if t < T and key not in trans:
                    trans[key] = None
                    pending.append((key, state, a))
        count += len(level)
        if t < T:
            count += sum(2 ** _uncertain(s, scenario) for _, s, _ in pending)
        if count > cap:
            raise StateSpaceError(f"state count exceeds cap of {cap}")
        for key, state, a in pending:
            out = []
            for tr in enumerate_successors(state, a, scenario, net):
                g = canonical_key(tr.successor, scenario)[:3]
                nxt.setdefault(g, tr.successor)
                out.append((tr.probability, g))
            trans[key] = out
        level = nxt

    # backward induction
    pre, post, policy = {}, {}, {}
    for t in range(T, 0, -1):
        groups = [g for g in reps if g[0] == t]
        for g in sorted(groups):
            state = reps[g]
            acts = tuple(a for a, _ in choices[g])
            costs = cm.costs(t, state.unavailable, acts)
            future = np.zeros(len(acts))
            if t < T:
                for i, (_, key) in enumerate(choices[g]):
                    if key not in post:
                        post[key] = math.fsum(p * pre[h] for p, h in trans[key])
                    future[i] = post[key]
            else:
                for _, key in choices[g]:
                    post[key] = 0.0
            i = tie_argmin(costs + future, tie_rank(net, state.unavailable, acts))
            pre[g] = float(costs[i] + future[i])
            policy[g] = acts[i]
    post[root_key] = math.fsum(p * pre[h] for p, h in trans[root_key])
    header = {"network": net.digest(), "scenario": scenario.digest(), "seed": scenario.seed,
              "states": count}
    return DPResult(post_values=post, pre_values=pre, policy=policy, root_value=post[root_key],
                    root_key=root_key, n_states=count, header=header)


def write_dp_values(path, net: Network, dp: DPResult) -> None:
    data = {
        "header": dp.header,
        "root_value": dp.root_value,
        "post_values": [
            {"t": k[0], "failed": _labels(net, [l for l, _ in k[1]]),
             "failure_periods": [tf for _, tf in k[1]],
             "isolated": _labels(net, [l for l, _ in k[2]]), "open": _labels(net, k[3]), "value": v}
            for k, v in sorted(dp.post_values.items())
        ],
        "policy": [
            {"t": g[0], "failed": _labels(net, [l for l, _ in g[1]]),
             "failure_periods": [tf for _, tf in g[1]],
             "isolated": _labels(net, [l for l, _ in g[2]]), "open": _labels(net, a),
             "value": dp.pre_values[g]}
            for g, a in sorted(dp.policy.items())
        ],
    }
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def read_dp_values(path) -> dict:
    return json.loads(Path(path).read_text())


# -- policy evaluation ----------------------------------------------------------

@dataclass
class PolicyEvalReport:
    mean_cost: float
    std_error: float
    shed_energy: list  # mean MWh shed per period
    path_costs: list
    logs: list  # per path: [{"t", "failures", "open", "cost", "shed"}]
    paths: int
    seed: int
    policy: str
    misses: int = 0
    header: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyEvalReport":
        return cls(**data)


def write_report(path, report: PolicyEvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")


def read_report(path) -> PolicyEvalReport:
    return PolicyEvalReport.from_dict(json.loads(Path(path).read_text()))


def _simulate(policy: Policy, net: Network, scenario: Scenario, seed: int, index: int):
    rng = path_rng(seed, index)
    root = root_state(net)
    pds = root
    entries = []
    total = 0.0
    shed_by_t = []
    for t in range(1, scenario.horizon + 1):
        fails = draw_failures(pds, scenario, rng)
        state = markov_state_update(pds, fails, scenario, net)
        actions, pds_list, i, costs, future = policy.choose(state)
        if t < scenario.horizon and not policy.visited(pds_list[i]):
            policy.vt.misses += 1
        shed, _, _ = policy.costs.bounds(state.unavailable, actions)
        cost = float(costs[i])
        total += cost
        shed_by_t.append(float(shed[i]) * scenario.dt)
        entries.append({"t": t, "failures": sorted(fails), "open": sorted(actions[i]), "cost": cost})
        pds = state.with_action(actions[i])
    return total, shed_by_t, entries


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRIDMDP_THREADS", "1")))
    except ValueError:
        return 1


def evaluate_policy(net: Network, scenario: Scenario, vt: ValueTable | None, paths: int, seed: int,
                    cost_model: CostModel | None = None, threads: int | None = None) -> PolicyEvalReport:
    """Monte Carlo cost of the greedy policy against a frozen value table.

    ``vt=None`` gives the myopic policy (zero future value). Path ``n`` uses
    the stream ``(seed, n)``, so two policies evaluated with the same seed
    face the same storm draws. Path results are reduced in path order, so
    the report does not depend on the thread count.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    scenario.validate(net)
    name = "greedy" if vt is not None else "myopic"
    source = vt if vt is not None else ValueTable()
    cm = cost_model or CostModel(net, scenario.eta_at, scenario.dt)
    n_threads = threads or _threads()

    def run(chunk):
        table = ValueTable.from_dict(source.to_dict()) if n_threads > 1 else source
        table.misses = 0
        pol = Policy(net, scenario, table, cm, table_initial(source))
        return [_simulate(pol, net, scenario, seed, n) for n in chunk], table.misses

    indices = list(range(paths))
    if n_threads > 1:
        chunks = [indices[k::n_threads] for k in range(n_threads)]
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(run, chunks))
        results = [None] * paths
        misses = 0
        for chunk, (res, m) in zip(chunks, parts):
            misses += m
            for n, r in zip(chunk, res):
                results[n] = r
    else:
        results, misses = run(indices)
    if vt is None:
        misses = 0  # the myopic policy has no table to miss
    costs = np.array([r[0] for r in results])
    shed = np.array([r[1] for r in results])
    std = float(costs.std(ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    if misses:
        log.info("%d decisions used the default value for an unvisited state", misses)
    return PolicyEvalReport(
        mean_cost=float(math.fsum(costs) / paths),
        std_error=std,
        shed_energy=[float(math.fsum(col) / paths) for col in shed.T],
        path_costs=[float(c) for c in costs],
        logs=[r[2] for r in results],
        paths=paths,
        seed=seed,
        policy=name,
        misses=misses,
        header={"network": net.digest(), "scenario": scenario.digest(), "seed": seed},
    )


def replay_log(net: Network, scenario: Scenario, entries: list) -> list:
    """Recompute per-period costs of a logged path from scratch."""
    cm = CostModel(net, scenario.eta_at, scenario.dt)
    pds = root_state(net)
    out = []
    for e in entries:
        state = markov_state_update(pds, e["failures"], scenario, net)
        action = frozenset(e["open"])
        actions = enumerate_actions(net, state)
        i = actions.index(action)
        out.append(float(cm.costs(state.t, state.unavailable, actions)[i]))
        pds = state.with_action(action)
    return out


# -- strategy tables ------------------------------------------------------------

@dataclass
class StrategyRow:
    period: int
    failures: list  # lines observed failed at this period
    opened: list
    closed: list
    open_after: list
    cost: float
    value: float


@dataclass
class StrategyTable:
    rows: list
    header: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"header": self.header, "rows": [asdict(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyTable":
        return cls(rows=[StrategyRow(**r) for r in data["rows"]], header=data.get("header", {}))


def write_strategy(path, table: StrategyTable) -> None:
    Path(path).write_text(json.dumps(table.to_dict(), indent=1, sort_keys=True) + "\n")


def read_strategy(path) -> StrategyTable:
    return StrategyTable.from_dict(json.loads(Path(path).read_text()))


def load_realization(path, net: Network) -> dict:
    """Fixed failure realization ``{period: [line ids]}`` from a replay file."""
    data = json.loads(Path(resolve_data_path(path)).read_text())
    out = {}
    for t, lines in data.get("failures", {}).items():
        out[int(t)] = [net.line_by_label(l).id if isinstance(l, str) else int(l) for l in lines]
    return out


def replay(net: Network, scenario: Scenario, vt: ValueTable, realization: dict,
           cost_model: CostModel | None = None) -> StrategyTable:
    """Follow the greedy policy along a fixed failure realization."""
    scenario.validate(net)
    policy = Policy(net, scenario, vt, cost_model, table_initial(vt))
    pds = root_state(net)
    rows = []
    for t in range(1, scenario.horizon + 1):
        fails = [l for l in realization.get(t, []) if l not in pds.failed_lines]
        state = markov_state_update(pds, fails, scenario, net)
        action, value, info = policy.select(state)
        rows.append(StrategyRow(
            period=t,
            failures=_labels(net, fails),
            opened=_labels(net, action - state.open_dispatchable),
            closed=_labels(net, state.open_dispatchable - action),
            open_after=_labels(net, action),
            cost=info["immediate"],
            value=value,
        ))
        pds = state.with_action(action)
    header = {"network": net.digest(), "scenario": scenario.digest(),
              "realization": {str(t): _labels(net, v) for t, v in sorted(realization.items())}}
    return StrategyTable(rows=rows, header=header)


# -- case studies ---------------------------------------------------------------

CASES = {
    "ieee33": {"network": "ieee33", "scenario": "ieee33_storm", "replay": "ieee33_table4"},
    "ieee123": {"network": "ieee123", "scenario": "ieee123_storm", "replay": "ieee123_table6"},
}

# Training settings used by the case studies and the command line unless
# overridden. Expected updates with a harmonic step remove most of the
# sampling noise of rare failures; the rollout start values unseen states at
# the cost of finishing the storm without further failures.
RECOMMENDED = {"update": "expected", "stepsize": "harmonic", "initial": "rollout"}

# post-decision probes in the second and first periods, given as open lines
TABLE_PROBES = {
    "ieee33": {
        "S1,2": (2, ["10-11", "12-13", "25-29", "1-18", "8-21"]),
        "S2,2": (2, ["10-11", "25-29", "1-18", "14-15", "8-21"]),
        "S3,2": (2, ["10-11", "25-29", "1-18", "12-22", "8-21"]),
        "S4,2": (2, ["25-29", "1-18", "14-15", "12-22", "8-21"]),
        "S1,1": (1, ["10-11", "12-13", "25-29", "1-18", "8-21"]),
    },
}


def parse_probe(net: Network, scenario: Scenario, spec: str) -> PostDecisionState:
    """``"t:a-b,c-d"`` -> no-outage post-decision state at ``t`` with those lines open.

    Raises ``ValueError`` if the open set is not a feasible action there.
    """
    t, _, lines = spec.partition(":")
    try:
        t = int(t)
    except ValueError:
        raise ValueError(f"bad probe {spec!r}; expected 't:a-b,c-d'") from None
    if not 0 <= t <= scenario.horizon:
        raise ValueError(f"probe period {t} outside 0..{scenario.horizon}")
    open_ids = frozenset(net.line_by_label(l.strip()).id for l in lines.split(",") if l.strip())
    state = MarkovState(t)
    if t > 0 and open_ids not in enumerate_actions(net, state):
        raise ValueError(f"probe {spec!r} is not a radial configuration")
    return post_decision(net, state, open_ids, scenario)


def case_probes(name: str, net: Network, scenario: Scenario) -> list:
    root = root_state(net)
    probes = [("root", post_decision(net, root, root.open_dispatchable, scenario))]
    for label, (t, lines) in TABLE_PROBES.get(name, {}).items():
        if t > scenario.horizon:
            continue
        try:
            probes.append((label, parse_probe(net, scenario, f"{t}:{','.join(lines)}")))
        except ValueError:
            log.warning("probe %s is not feasible on this network and is skipped", label)
    return probes


@dataclass
class CaseStudyResult:
    table: ValueTable
    strategy: StrategyTable
    trace: list
    probes: list
    converged: dict
    network: Network
    scenario: Scenario


def run_case_study(name: str, overrides: dict | None = None) -> CaseStudyResult:
    """Train on a bundled feeder and replay its designated failure path.

    Training uses :data:`RECOMMENDED` on top of the :class:`ADPConfig`
    defaults. ``overrides`` may set any :class:`ADPConfig` field, ``rate``
    (uniform failure probability) and ``probes`` (extra ``"t:lines"``
    specs).
    """
    if name not in CASES:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}")
    ov = dict(overrides or {})
    files = CASES[name]
    net = load_network(files["network"])
    scenario = load_scenario(files["scenario"], net)
    if "rate" in ov:
        scenario = scenario.with_rate(float(ov.pop("rate")))
    extra = ov.pop("probes", [])
    cfg_fields = {k: ov.pop(k) for k in list(ov) if k in ADPConfig.__dataclass_fields__}
    if ov:
        raise ValueError(f"unknown overrides {sorted(ov)}")
    config = ADPConfig(**{**RECOMMENDED, **cfg_fields})
    probes = case_probes(name, net, scenario)
    probes += [(s, parse_probe(net, scenario, s)) for s in extra]
    cm = CostModel(net, scenario.eta_at, scenario.dt)
    vt, trace = train(net, scenario, config, probes, cost_model=cm)
    realization = load_realization(files["replay"], net)
    strategy = replay(net, scenario, vt, realization, cm)
    converged = {label: converged_value(trace, label) for label, _ in probes}
    return CaseStudyResult(table=vt, strategy=strategy, trace=trace, probes=probes,
                           converged=converged, network=net, scenario=scenario)


__all__ = [
    "CASES", "RECOMMENDED", "DPResult", "PolicyEvalReport", "StateSpaceError", "StrategyRow",
    "StrategyTable", "TIE_RTOL", "case_probes", "evaluate_policy", "exact_dp", "load_realization",
    "parse_probe", "pds_label", "read_dp_values", "read_report", "read_strategy", "replay",
    "replay_log", "run_case_study", "write_dp_values", "write_report", "write_strategy",
]
