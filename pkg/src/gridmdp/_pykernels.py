"""Pure-Python reference versions of the hot kernels.

These mirror ``_ckernels.pyx`` line for line and are used when the compiled
extension is unavailable (or ``GRIDMDP_PURE_PYTHON=1`` is set).
"""

import numpy as np


def radial_masks(n_bus, is_sub, base_from, base_to, cand_from, cand_to):
    """Return every closed-subset mask of the candidate lines that keeps the
    network radial, as a sorted int64 array.

    Bit ``i`` of a mask set means candidate ``i`` is closed. ``base_*`` are
    lines that are always closed. A component is acceptable when it holds no
    substation, or exactly one substation and no cycle. Closing a line can
    only merge components, so an unacceptable component stays unacceptable
    and the whole branch of the search is pruned.
    """
    n_bus = int(n_bus)
    parent = list(range(n_bus))
    size = [1] * n_bus
    subs = [int(s) for s in is_sub]
    cyc = [0] * n_bus
    undo = []

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            undo.append((ra, -1, cyc[ra], subs[ra]))
            cyc[ra] = 1
            return subs[ra] == 0
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        undo.append((ra, rb, cyc[ra], subs[ra]))
        parent[rb] = ra
        size[ra] += size[rb]
        subs[ra] += subs[rb]
        cyc[ra] = cyc[ra] | cyc[rb]
        return not (subs[ra] >= 2 or (subs[ra] >= 1 and cyc[ra]))

    def rollback():
        ra, rb, c, s = undo.pop()
        if rb >= 0:
            parent[rb] = rb
            size[ra] -= size[rb]
        cyc[ra] = c
        subs[ra] = s

    for a, b in zip(base_from, base_to):
        if not union(int(a), int(b)):
            return np.zeros(0, dtype=np.int64)

    cf = [int(v) for v in cand_from]
    ct = [int(v) for v in cand_to]
    m = len(cf)
    out = []

    def dfs(i, mask):
        if i == m:
            out.append(mask)
            return
        dfs(i + 1, mask)
        if union(cf[i], ct[i]):
            dfs(i + 1, mask | (1 << i))
        rollback()

    dfs(0, 0)
    return np.array(sorted(out), dtype=np.int64)


def tree_sweep(n_bus, line_from, line_to, closed, r, x, p, q, is_sub, base_mva):
    """Energize a radial configuration and compute its lossless branch flows
    (MW / MVAr, positive in from->to direction) and squared voltages.

    Returns ``(energized, flow_p, flow_q, u)``; buses not reached from a
    substation get ``u = 0``. Substations are held at ``u = 1``.
    """
    n_bus = int(n_bus)
    n_line = len(line_from)
    adj = [[] for _ in range(n_bus)]
    for l in range(n_line):
        if closed[l]:
            a, b = int(line_from[l]), int(line_to[l])
            adj[a].append((b, l))
            adj[b].append((a, l))

    energized = np.zeros(n_bus, dtype=np.uint8)
    par_bus = [-1] * n_bus
    par_line = [-1] * n_bus
    order = []
    for s in range(n_bus):
        if not is_sub[s] or energized[s]:
            continue
        energized[s] = 1
        head = len(order)
        order.append(s)
        while head < len(order):
            k = order[head]
            head += 1
            for nb, l in adj[k]:
                if not energized[nb]:
                    energized[nb] = 1
                    par_bus[nb] = k
                    par_line[nb] = l
                    order.append(nb)

    sp = [float(v) for v in p]
    sq = [float(v) for v in q]
    fp = np.zeros(n_line)
    fq = np.zeros(n_line)
    for k in reversed(order):
        l = par_line[k]
        if l < 0:
            continue
        sign = 1.0 if int(line_to[l]) == k else -1.0
        fp[l] = sign * sp[k]
        fq[l] = sign * sq[k]
        pb = par_bus[k]
        sp[pb] += sp[k]
        sq[pb] += sq[k]

    u = np.zeros(n_bus)
    for k in order:
        l = par_line[k]
        if l < 0:
            u[k] = 1.0
            continue
        drop = 2.0 * (r[l] * fp[l] + x[l] * fq[l]) / base_mva
        if int(line_to[l]) == k:
            u[k] = u[par_bus[k]] - drop
        else:
            u[k] = u[par_bus[k]] + drop
    return energized, fp, fq, u


def config_sweep(n_bus, line_from, line_to, closed_masks, r, x, p, q, is_sub, base_mva,
                 s_max, vmin_sq, vmax_sq, tol):
    """Full-service power flow for many configurations at once.

    ``closed_masks`` is an ``(n_config, n_line)`` 0/1 array. For each row,
    returns the active load left without a substation path, whether the
    radial flow with every energized load served respects the line limits
    (including the 45-degree cuts) and voltage bounds, each relaxed by the
    relative ``tol``, and a lower bound on the shedding any feasible dispatch
    needs (0 when the row is within limits).

    The bound uses that one MW shed anywhere moves a line's active flow by
    at most 1 MW, its reactive flow by at most ``rho`` (the largest
    ``|q / p|``), and a bus voltage by at most the path sum of
    ``2 (r + x rho) / base``; so each violated limit needs at least its
    excess divided by that rate.
    """
    masks = np.asarray(closed_masks, dtype=np.uint8)
    n_cfg = masks.shape[0]
    n_bus = int(n_bus)
    islanded = np.zeros(n_cfg)
    ok = np.zeros(n_cfg, dtype=np.uint8)
    lb = np.zeros(n_cfg)
    root2 = np.sqrt(2.0)
    rho = 0.0
    for k in range(n_bus):
        if p[k] > 0 and abs(q[k]) / p[k] > rho:
            rho = abs(q[k]) / p[k]
    for c in range(n_cfg):
        energized, fp, fq, u = tree_sweep(n_bus, line_from, line_to, masks[c], r, x, p, q,
                                          is_sub, base_mva)
        isl = 0.0
        for k in range(n_bus):
            if not energized[k]:
                isl += p[k]
        islanded[c] = isl
        good = True
        need = 0.0
        for l in range(len(line_from)):
            s = s_max[l] * (1 + tol)
            if abs(fp[l]) > s or abs(fq[l]) > s:
                good = False
            if abs(fp[l] + fq[l]) > root2 * s or abs(fp[l] - fq[l]) > root2 * s:
                good = False
            need = max(need, abs(fp[l]) - s_max[l])
            if rho > 0:
                need = max(need, (abs(fq[l]) - s_max[l]) / rho)
            need = max(need, (abs(fp[l] + fq[l]) - root2 * s_max[l]) / (1 + rho))
            need = max(need, (abs(fp[l] - fq[l]) - root2 * s_max[l]) / (1 + rho))
        for k, path in _paths(n_bus, line_from, line_to, masks[c], is_sub, r, x, rho, base_mva):
            if u[k] < vmin_sq[k] * (1 - tol) or u[k] > vmax_sq[k] * (1 + tol):
                good = False
            if path > 0:
                need = max(need, (vmin_sq[k] - u[k]) / path)
        ok[c] = good
        lb[c] = 0.0 if good else need
    return islanded, ok, lb


def _paths(n_bus, line_from, line_to, closed, is_sub, r, x, rho, base_mva):
    """``(bus, sum over its feeding path of 2 (r + x rho) / base)`` for energized non-substation buses, in BFS order."""
    adj = [[] for _ in range(n_bus)]
    for l in range(len(line_from)):
        if closed[l]:
            a, b = int(line_from[l]), int(line_to[l])
            adj[a].append((b, l))
            adj[b].append((a, l))
    seen = [False] * n_bus
    path = [0.0] * n_bus
    out = []
    for s in range(n_bus):
        if not is_sub[s] or seen[s]:
            continue
        seen[s] = True
        order = [s]
        head = 0
        while head < len(order):
            k = order[head]
            head += 1
            for nb, l in adj[k]:
                if not seen[nb]:
                    seen[nb] = True
                    path[nb] = path[k] + 2.0 * (r[l] + x[l] * rho) / base_mva
                    out.append((nb, path[nb]))
                    order.append(nb)
    return out


def subtree_masks(n_bus, line_from, line_to, closed_masks, is_sub, cand):
    """Buses fed through each candidate line, per configuration.

    Returns an ``(n_config, n_cand, n_bus)`` 0/1 array; row ``[c, j]`` marks
    the buses downstream of candidate line ``cand[j]`` in the substation-fed
    tree of configuration ``c`` (all zero if that line carries no feed).
    """
    masks = np.asarray(closed_masks, dtype=np.uint8)
    n_bus = int(n_bus)
    n_line = len(line_from)
    n_cfg = masks.shape[0]
    out = np.zeros((n_cfg, len(cand), n_bus), dtype=np.uint8)
    for c in range(n_cfg):
        adj = [[] for _ in range(n_bus)]
        for l in range(n_line):
            if masks[c, l]:
                a, b = int(line_from[l]), int(line_to[l])
                adj[a].append((b, l))
                adj[b].append((a, l))
        energized = [False] * n_bus
        par_bus = [-1] * n_bus
        par_line = [-1] * n_bus
        order = []
        for s in range(n_bus):
            if not is_sub[s] or energized[s]:
                continue
            energized[s] = True
            head = len(order)
            order.append(s)
            while head < len(order):
                k = order[head]
                head += 1
                for nb, l in adj[k]:
                    if not energized[nb]:
                        energized[nb] = True
                        par_bus[nb] = k
                        par_line[nb] = l
                        order.append(nb)
        for j, l in enumerate(cand):
            l = int(l)
            a, b = int(line_from[l]), int(line_to[l])
            if energized[b] and par_line[b] == l:
                child = b
            elif energized[a] and par_line[a] == l:
                child = a
            else:
                continue
            row = out[c, j]
            for k in order:
                if k == child or (par_bus[k] >= 0 and row[par_bus[k]]):
                    row[k] = 1
    return out
