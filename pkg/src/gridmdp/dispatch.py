"""Linearized DistFlow load-shedding dispatch and the per-period cost."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from gridmdp import kernels
from gridmdp.grid import Network, Topology, closed_masks, energization, is_radial, tie_rank

DEFAULT_ETA = 1000.0  # $/MWh
SQRT2 = math.sqrt(2.0)
_TOL = 1e-9


class DispatchError(RuntimeError):
    """The dispatch problem could not be set up or solved."""


@dataclass(frozen=True)
class DispatchCase:
    topology: Topology | None
    period: int = 1
    eta: float = DEFAULT_ETA
    dt: float = 1.0
    loads: dict | None = None  # bus id -> (p, q); network loads when None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class DispatchResult:
    shed_p: dict
    shed_q: dict
    flows: dict
    voltages_sq: dict
    cost: float
    feasible: bool
    status: str = "optimal"
    used_lp: bool = False
    quadratic_violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "feasible": self.feasible,
            "cost": self.cost,
            "used_lp": self.used_lp,
            "shed_p": {str(k): v for k, v in sorted(self.shed_p.items())},
            "shed_q": {str(k): v for k, v in sorted(self.shed_q.items())},
            "flows": {str(k): list(v) for k, v in sorted(self.flows.items())},
            "voltages_sq": {str(k): v for k, v in sorted(self.voltages_sq.items())},
            "quadratic_violations": list(self.quadratic_violations),
        }


@dataclass
class LinearProgram:
    """``min c @ x`` s.t. ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``, bounds."""

    c: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    A_eq: sparse.csr_matrix
    b_eq: np.ndarray
    bounds: list
    names: list
    shed_idx: dict = field(default_factory=dict)
    flow_idx: dict = field(default_factory=dict)
    u_idx: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.c)
        if self.A_ub.shape[1] != n or self.A_eq.shape[1] != n or len(self.bounds) != n:
            raise ValueError("inconsistent LP dimensions")
        if self.A_ub.shape[0] != len(self.b_ub) or self.A_eq.shape[0] != len(self.b_eq):
            raise ValueError("inconsistent LP dimensions")
        for arr in (self.c, self.b_ub, self.b_eq, self.A_ub.data, self.A_eq.data):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP coefficients must be finite")


@dataclass
class LPSolution:
    x: np.ndarray
    objective: float


def big_m(net: Network) -> float:
    """Sufficient disjunctive constant for the voltage-drop constraints."""
    v_span = max(b.v_max for b in net.buses) ** 2 - min(b.v_min for b in net.buses) ** 2
    return v_span + 2.0 * sum((l.r + l.x) * l.s_max for l in net.lines) / net.base_mva


def _loads(net: Network, case: DispatchCase) -> dict:
    if case.loads is None:
        return {b.id: (b.p_load, b.q_load) for b in net.buses}
    return {b.id: tuple(case.loads.get(b.id, (b.p_load, b.q_load))) for b in net.buses}


def build_dispatch_lp(net: Network, case: DispatchCase) -> LinearProgram:
    topo = case.topology
    if topo is None:
        raise DispatchError("dispatch case has no topology")
    if not is_radial(net, topo.closed_lines):
        raise DispatchError("topology is not radial")
    loads = _loads(net, case)
    energized = sorted(topo.energized_buses)
    names, bounds = [], []
    shed_idx, flow_idx, u_idx = {}, {}, {}
    for b in energized:
        bus = net.bus(b)
        shed_idx[b] = len(names)
        names.append(f"shed_p[{b}]")
        bounds.append((0.0, 0.0 if bus.is_substation else loads[b][0]))
    lines = [l for l in net.lines
             if l.from_bus in topo.energized_buses and l.to_bus in topo.energized_buses]
    for l in lines:
        on = l.id in topo.closed_lines
        cap = l.s_max if on else 0.0
        flow_idx[l.id] = (len(names), len(names) + 1)
        names += [f"fp[{l.id}]", f"fq[{l.id}]"]
        bounds += [(-cap, cap), (-cap, cap)]
    for b in energized:
        bus = net.bus(b)
        u_idx[b] = len(names)
        names.append(f"u[{b}]")
        bounds.append((1.0, 1.0) if bus.is_substation else (bus.v_min ** 2, bus.v_max ** 2))
    n = len(names)

    c = np.zeros(n)
    for b, i in shed_idx.items():
        c[i] = case.eta * case.dt

    incident = {b: [] for b in energized}
    for l in lines:
        incident[l.from_bus].append(l)
        incident[l.to_bus].append(l)
    eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
    row = 0
    for b in energized:
        if net.bus(b).is_substation:
            continue
        p, q = loads[b]
        ratio = q / p if p > 0 else 0.0
        for l in incident[b]:
            sign = 1.0 if l.to_bus == b else -1.0
            ip, iq = flow_idx[l.id]
            eq_rows += [row, row + 1]
            eq_cols += [ip, iq]
            eq_vals += [sign, sign]
        eq_rows += [row, row + 1]
        eq_cols += [shed_idx[b], shed_idx[b]]
        eq_vals += [1.0, ratio]
        b_eq += [p, q]
        row += 2
    A_eq = sparse.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(row, n))

    M = big_m(net)
    ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
    row = 0
    for l in lines:
        on = l.id in topo.closed_lines
        slack = 0.0 if on else M
        ip, iq = flow_idx[l.id]
        uf, ut = u_idx[l.from_bus], u_idx[l.to_bus]
        kr, kx = 2.0 * l.r / net.base_mva, 2.0 * l.x / net.base_mva
        # u_from - u_to - 2(r fp + x fq) <= (1 - beta) M, and >= -(1 - beta) M
        for s in (1.0, -1.0):
            ub_rows += [row] * 4
            ub_cols += [uf, ut, ip, iq]
            ub_vals += [s, -s, -s * kr, -s * kx]
            b_ub.append(slack)
            row += 1
        cap = SQRT2 * l.s_max if on else 0.0
        for a, bcoef in ((1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)):
            ub_rows += [row, row]
            ub_cols += [ip, iq]
            ub_vals += [a, bcoef]
            b_ub.append(cap)
            row += 1
    A_ub = sparse.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(row, n))
    return LinearProgram(c=c, A_ub=A_ub, b_ub=np.array(b_ub, dtype=float), A_eq=A_eq,
                         b_eq=np.array(b_eq, dtype=float), bounds=bounds, names=names,
                         shed_idx=shed_idx, flow_idx=flow_idx, u_idx=u_idx)


_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "numerical"}


def solve_lp(lp: LinearProgram):
    """Solve with HiGHS; returns ``(status, LPSolution | None)``."""
    if len(lp.c) == 0:
        return "optimal", LPSolution(x=np.zeros(0), objective=0.0)
    res = linprog(
        lp.c,
        A_ub=lp.A_ub if lp.A_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.A_ub.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
        bounds=lp.bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    status = _STATUS.get(res.status, "numerical")
    if status != "optimal" or res.x is None or not np.all(np.isfinite(res.x)):
        return (status if status != "optimal" else "numerical"), None
    return status, LPSolution(x=np.asarray(res.x), objective=float(res.fun))


def _sweep(net: Network, closed: frozenset, p: np.ndarray, q: np.ndarray):
    mask = np.array([l.id in closed for l in net.lines], dtype=np.uint8)
    return kernels.tree_sweep(
        len(net.buses), net._lf, net._lt, mask,
        np.array([l.r for l in net.lines]), np.array([l.x for l in net.lines]),
        p, q, net._is_sub, net.base_mva,
    )


def _within_limits(net: Network, energized, fp, fq, u) -> bool:
    for i, l in enumerate(net.lines):
        s = l.s_max * (1 + _TOL)
        if abs(fp[i]) > s or abs(fq[i]) > s:
            return False
        if abs(fp[i] + fq[i]) > SQRT2 * s or abs(fp[i] - fq[i]) > SQRT2 * s:
            return False
    for k, b in enumerate(net.buses):
        if energized[k] and not b.is_substation:
            if u[k] < b.v_min ** 2 * (1 - _TOL) or u[k] > b.v_max ** 2 * (1 + _TOL):
                return False
    return True


def _result(net, topo, shed, loads, fp, fq, u, cost, used_lp, status="optimal") -> DispatchResult:
    shed_p, shed_q = {}, {}
    for b in sorted(topo.energized_buses):
        p, q = loads[b]
        sp = shed.get(b, 0.0)
        shed_p[b] = sp
        shed_q[b] = (q / p) * sp if p > 0 else 0.0
    flows, viol = {}, []
    for i, l in enumerate(net.lines):
        flows[l.id] = (float(fp[i]), float(fq[i]))
        if fp[i] ** 2 + fq[i] ** 2 > l.s_max ** 2 * (1 + 1e-9):
            viol.append(l.id)
    volts = {b.id: float(u[k]) for k, b in enumerate(net.buses) if b.id in topo.energized_buses}
    return DispatchResult(shed_p=shed_p, shed_q=shed_q, flows=flows, voltages_sq=volts, cost=cost,
                          feasible=True, status=status, used_lp=used_lp, quadratic_violations=viol)


def build_tree_lp(net: Network, case: DispatchCase, p: np.ndarray, q: np.ndarray,
                  fp: np.ndarray, fq: np.ndarray, u: np.ndarray) -> LinearProgram:
    """The dispatch LP with shedding as the only variables.

    On a radial topology the conservation equations fix every flow and
    voltage as an affine function of the shed vector, so the flow and
    voltage variables can be eliminated. ``fp, fq, u`` are the full-service
    flows and squared voltages. A limit row ``a @ shed <= b`` is dropped when
    even its largest value over the shed bounds satisfies it, so the program
    keeps the same feasible set and optimum as :func:`build_dispatch_lp`.
    """
    topo = case.topology
    n_bus = len(net.buses)
    ratio = np.divide(q, p, out=np.zeros(n_bus), where=p > 0)
    # tree structure: parent line of each energized bus, in BFS order
    adj = [[] for _ in range(n_bus)]
    for lid in topo.closed_lines:
        k = net.line_index[lid]
        a, b = int(net._lf[k]), int(net._lt[k])
        adj[a].append((b, k))
        adj[b].append((a, k))
    par_line = np.full(n_bus, -1)
    par_bus = np.full(n_bus, -1)
    order = []
    for s in range(n_bus):
        if net._is_sub[s] and s not in order:
            order.append(s)
            head = len(order) - 1
            while head < len(order):
                k = order[head]
                head += 1
                for nb, l in adj[k]:
                    if par_line[nb] < 0 and not net._is_sub[nb] and nb not in order:
                        par_line[nb] = l
                        par_bus[nb] = k
                        order.append(nb)
    var_bus = [k for k in order if not net._is_sub[k] and p[k] > 0]
    col = {k: j for j, k in enumerate(var_bus)}
    n = len(var_bus)
    ub = p[var_bus] if n else np.zeros(0)
    rho = ratio[var_bus] if n else np.zeros(0)
    tree_lines = [int(par_line[k]) for k in order if par_line[k] >= 0]
    child = {int(par_line[k]): k for k in order if par_line[k] >= 0}
    row_of = {l: i for i, l in enumerate(tree_lines)}
    # D[i, j] = 1 if variable bus j is fed through tree line i
    D = np.zeros((len(tree_lines), n))
    for k in reversed(order):
        l = par_line[k]
        if l < 0:
            continue
        i = row_of[int(l)]
        if k in col:
            D[i, col[k]] = 1.0
        for nb, l2 in adj[k]:
            if par_bus[nb] == k and par_line[nb] == l2:
                D[i] = np.maximum(D[i], D[row_of[int(l2)]])
    # downstream-oriented full-service flows
    sgn = np.array([1.0 if int(net._lt[l]) == child[l] else -1.0 for l in tree_lines])
    P0 = sgn * fp[tree_lines] if tree_lines else np.zeros(0)
    Q0 = sgn * fq[tree_lines] if tree_lines else np.zeros(0)
    dP = -D  # d(flow p)/d(shed)
    dQ = -D * rho[None, :]
    rows, rhs = [], []
    smax = np.array([net.lines[l].s_max for l in tree_lines])
    for a, bq, cap in ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
                       (1, 1, SQRT2), (-1, -1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2)):
        if not tree_lines:
            break
        rows.append(a * dP + bq * dQ)
        rhs.append(cap * smax - (a * P0 + bq * Q0))
    # voltage: u_k = u0_k - sum over path lines of 2 (r dP + x dQ) shed / base
    bus_rows = [k for k in order if not net._is_sub[k]]
    if bus_rows and tree_lines:
        r = np.array([net.lines[l].r for l in tree_lines]) * 2.0 / net.base_mva
        x = np.array([net.lines[l].x for l in tree_lines]) * 2.0 / net.base_mva
        A = np.zeros((len(bus_rows), len(tree_lines)))
        pos = {}
        for i, k in enumerate(bus_rows):
            pb = par_bus[k]
            if pb in pos:
                A[i] = A[pos[pb]]
            A[i, row_of[int(par_line[k])]] = 1.0
            pos[k] = i
        du = -(A @ (r[:, None] * dP + x[:, None] * dQ))  # d(u)/d(shed)
        vmin_sq = np.array([net.buses[k].v_min ** 2 for k in bus_rows])
        vmax_sq = np.array([net.buses[k].v_max ** 2 for k in bus_rows])
        rows += [-du, du]
        rhs += [u[bus_rows] - vmin_sq, vmax_sq - u[bus_rows]]
    if rows and n:
        G = np.vstack(rows)
        h = np.concatenate(rhs)
        worst = np.maximum(G, 0.0) @ ub
        keep = worst > h
        G, h = G[keep], h[keep]
    else:
        G, h = np.zeros((0, n)), np.zeros(0)
    return LinearProgram(
        c=np.full(n, case.eta * case.dt), A_ub=sparse.csr_matrix(G), b_ub=h,
        A_eq=sparse.csr_matrix((0, n)), b_eq=np.zeros(0),
        bounds=[(0.0, float(v)) for v in ub], names=[f"shed_p[{net.buses[k].id}]" for k in var_bus],
        shed_idx={net.buses[k].id: j for j, k in enumerate(var_bus)},
    )


def solve_dispatch(net: Network, case: DispatchCase, formulation: str = "tree") -> DispatchResult:
    """Minimum-cost shedding over the energized part of a radial topology.

    If the radial power flow with every load served is within limits the LP
    optimum is zero shedding and the LP is skipped. Otherwise the LP is
    solved (``formulation="tree"``: shedding variables only, see
    :func:`build_tree_lp`; ``"full"``: the flow, voltage and shedding LP of
    :func:`build_dispatch_lp`) and flows and voltages are recomputed exactly
    from the served loads (the flow solution of a tree is unique).
    """
    if formulation not in ("tree", "full"):
        raise ValueError("formulation must be 'tree' or 'full'")
    topo = case.topology
    if not is_radial(net, topo.closed_lines):
        raise DispatchError("topology is not radial")
    loads = _loads(net, case)
    p = np.array([loads[b.id][0] for b in net.buses])
    q = np.array([loads[b.id][1] for b in net.buses])
    energized, fp, fq, u = _sweep(net, topo.closed_lines, p, q)
    if _within_limits(net, energized, fp, fq, u):
        return _result(net, topo, {}, loads, fp, fq, u, 0.0, used_lp=False)
    if formulation == "tree":
        lp = build_tree_lp(net, case, p, q, fp, fq, u)
    else:
        lp = build_dispatch_lp(net, case)
    status, sol = solve_lp(lp)
    if sol is None:
        return DispatchResult(shed_p={}, shed_q={}, flows={}, voltages_sq={}, cost=math.inf,
                              feasible=False, status=status, used_lp=True)
    shed = {b: float(sol.x[i]) for b, i in lp.shed_idx.items()}
    for b, v in shed.items():
        shed[b] = min(max(v, 0.0), loads[b][0])
    p_srv = p.copy()
    q_srv = q.copy()
    for k, b in enumerate(net.buses):
        if b.id in shed and loads[b.id][0] > 0:
            frac = shed[b.id] / loads[b.id][0]
            p_srv[k] -= shed[b.id]
            q_srv[k] -= frac * loads[b.id][1]
    energized, fp, fq, u = _sweep(net, topo.closed_lines, p_srv, q_srv)
    cost = case.eta * case.dt * math.fsum(shed.values())
    return _result(net, topo, shed, loads, fp, fq, u, cost, used_lp=True)


def islanded_load(net: Network, topo: Topology, loads: dict | None = None) -> float:
    isl = sorted(topo.islanded_buses, key=net.bus_index.get)
    if loads is None:
        return sum(net.bus(b).p_load for b in isl)
    return sum(loads.get(b, (net.bus(b).p_load, 0.0))[0] for b in isl)


def switch_cost(net: Network, closed) -> float:
    return sum(net.line(lid).switch_cost for lid in closed if net.line(lid).dispatchable)


def immediate_cost(net: Network, state, action, case: DispatchCase):
    """Period cost of taking ``action`` in ``state``: LP shedding, full loss
    of islanded load, and the operating cost of closed dispatchable lines.

    Returns ``(cost, DispatchResult)``.
    """
    closed = net.closed_lines(action, state.unavailable)
    topo = energization(net, closed, state.unavailable)
    case = DispatchCase(topology=topo, period=case.period, eta=case.eta, dt=case.dt, loads=case.loads)
    res = solve_dispatch(net, case)
    if not res.feasible:
        raise DispatchError(f"dispatch LP failed with status {res.status}")
    isl = islanded_load(net, topo, case.loads)
    total = res.cost + case.eta * case.dt * isl + switch_cost(net, topo.closed_lines)
    return total, res


class CostModel:
    """Cached per-action shed energy and switching cost for one network.

    ``costs(t, unavailable, actions)`` returns the immediate cost of each
    action as an array aligned with ``actions``; actions whose dispatch
    failed carry ``inf``. ``select`` finds the cost-plus-future argmin while
    solving LPs only where the lower bound leaves the answer open. Shedding
    (MW) does not depend on the period because loads are static, so one
    cache entry serves every period.
    """

    def __init__(self, net: Network, eta, dt: float = 1.0):
        self.net = net
        self.eta = eta  # callable period -> $/MWh
        self.dt = dt
        self._cache = {}
        self._lp = {}  # energized closed lines -> LP shed (MW) or None on failure
        self._lock = threading.Lock()
        self.failures = []

    def _arrays(self):
        arr = self.__dict__.get("_arr")
        if arr is None:
            net = self.net
            arr = {
                "r": np.array([l.r for l in net.lines]),
                "x": np.array([l.x for l in net.lines]),
                "p": np.array([b.p_load for b in net.buses]),
                "q": np.array([b.q_load for b in net.buses]),
                "smax": np.array([l.s_max for l in net.lines]),
                "vmin_sq": np.array([b.v_min ** 2 for b in net.buses]),
                "vmax_sq": np.array([b.v_max ** 2 for b in net.buses]),
                "swc": np.array([l.switch_cost if l.dispatchable else 0.0 for l in net.lines]),
            }
            self._arr = arr
        return arr

    def closed_masks(self, unavailable: frozenset, actions: tuple) -> np.ndarray:
        """``(n_action, n_line)`` 0/1 matrix of closed in-service lines."""
        return closed_masks(self.net, unavailable, actions)

    def bounds(self, unavailable: frozenset, actions: tuple):
        """Shed energy per action with an ``exact`` flag.

        Where the full-service radial flow is within limits the value is
        exact (islanded load only). Elsewhere it is the islanded load plus
        the sweep's bound on the shedding the LP will need, a lower bound,
        until :meth:`resolve` runs the LP. Returns ``(shed, sw, exact)``
        arrays owned by the cache.
        """
        hit = self._cache.get(unavailable)
        if hit is not None and (hit[0] is actions or hit[0] == actions):
            return hit[1], hit[2], hit[3]
        net = self.net
        arr = self._arrays()
        masks = self.closed_masks(unavailable, actions)
        islanded, ok, need = kernels.config_sweep(
            len(net.buses), net._lf, net._lt, masks, arr["r"], arr["x"], arr["p"], arr["q"],
            net._is_sub, net.base_mva, arr["smax"], arr["vmin_sq"], arr["vmax_sq"], _TOL,
        )
        exact = np.asarray(ok, dtype=bool).copy()
        # margin keeps the bound below LP optima computed to solver tolerance
        lower = np.where(exact, 0.0, np.maximum(np.asarray(need) * (1.0 - 1e-6), 0.0))
        shed = np.array(islanded, dtype=float)
        sw = masks @ arr["swc"]
        with self._lock:
            self._cache[unavailable] = (actions, shed + lower, sw, exact, shed,
                                        tie_rank(net, unavailable, actions))
        return self._cache[unavailable][1:4]

    def resolve(self, unavailable: frozenset, actions: tuple, indices) -> None:
        """Run the dispatch LP for the listed actions and make them exact."""
        shed, _, exact = self.bounds(unavailable, actions)
        islanded = self._cache[unavailable][4]
        net = self.net
        for i in indices:
            if exact[i]:
                continue
            a = actions[i]
            topo = energization(net, net.closed_lines(a, unavailable), unavailable)
            # the LP only sees the energized part, so actions that differ in
            # dead areas alone share one solve
            key = frozenset(l for l in topo.closed_lines if net.line(l).from_bus in topo.energized_buses)
            if key in self._lp:
                lp_shed = self._lp[key]
            else:
                res = solve_dispatch(net, DispatchCase(topology=topo))
                lp_shed = math.fsum(res.shed_p.values()) if res.feasible else None
                if not res.feasible:
                    self.failures.append((unavailable, a, res.status))
                with self._lock:
                    self._lp[key] = lp_shed
            shed[i] = math.inf if lp_shed is None else islanded[i] + lp_shed
            exact[i] = True

    def shed_switch(self, unavailable: frozenset, actions: tuple):
        """Exact shed energy (MWh per hour) and switching cost for every action."""
        shed, sw, exact = self.bounds(unavailable, actions)
        if not exact.all():
            self.resolve(unavailable, actions, np.flatnonzero(~exact))
        return shed, sw

    def costs(self, t: int, unavailable: frozenset, actions: tuple) -> np.ndarray:
        shed, sw = self.shed_switch(unavailable, actions)
        return self.eta(t) * self.dt * shed + sw

    def select(self, t: int, unavailable: frozenset, actions: tuple, future: np.ndarray, rtol: float):
        """Exact tie-tolerant argmin of ``cost + future`` with lazy LP solves.

        The action with the lowest lower-bound total inside the tolerance
        band of the current minimum is resolved, one at a time, until the
        band holds exact entries only. The result equals the argmin over
        fully resolved costs, with ties going to the lowest
        :func:`~gridmdp.grid.tie_rank`. Returns ``(index, costs)`` where ``costs`` is exact at
        ``index``.
        """
        shed, sw, exact = self.bounds(unavailable, actions)
        rank = self._cache[unavailable][5]
        scale = self.eta(t) * self.dt
        while True:
            costs = scale * shed + sw
            totals = costs + future
            best = float(np.min(totals))
            if not np.isfinite(best):
                raise DispatchError("no action with a finite cost")
            band = np.flatnonzero(totals <= best + rtol * abs(best))
            pending = band[~exact[band]]
            if pending.size == 0:
                return int(band[np.argmin(rank[band])]), costs
            self.resolve(unavailable, actions, [int(pending[np.argmin(totals[pending])])])
