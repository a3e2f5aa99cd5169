# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels. Semantics match ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


cdef struct UF:
    long *parent
    long *size
    long *subs
    char *cyc
    long *u_ra
    long *u_rb
    char *u_cyc
    long *u_subs
    long top


cdef inline long _find(UF *uf, long a) noexcept nogil:
    while uf.parent[a] != a:
        a = uf.parent[a]
    return a


cdef inline bint _union(UF *uf, long a, long b) noexcept nogil:
    cdef long ra = _find(uf, a)
    cdef long rb = _find(uf, b)
    cdef long tmp
    cdef long t = uf.top
    if ra == rb:
        uf.u_ra[t] = ra
        uf.u_rb[t] = -1
        uf.u_cyc[t] = uf.cyc[ra]
        uf.u_subs[t] = uf.subs[ra]
        uf.top = t + 1
        uf.cyc[ra] = 1
        return uf.subs[ra] == 0
    if uf.size[ra] < uf.size[rb]:
        tmp = ra
        ra = rb
        rb = tmp
    uf.u_ra[t] = ra
    uf.u_rb[t] = rb
    uf.u_cyc[t] = uf.cyc[ra]
    uf.u_subs[t] = uf.subs[ra]
    uf.top = t + 1
    uf.parent[rb] = ra
    uf.size[ra] += uf.size[rb]
    uf.subs[ra] += uf.subs[rb]
    uf.cyc[ra] = uf.cyc[ra] | uf.cyc[rb]
    return not (uf.subs[ra] >= 2 or (uf.subs[ra] >= 1 and uf.cyc[ra]))


cdef inline void _rollback(UF *uf) noexcept nogil:
    uf.top -= 1
    cdef long t = uf.top
    cdef long ra = uf.u_ra[t]
    cdef long rb = uf.u_rb[t]
    if rb >= 0:
        uf.parent[rb] = rb
        uf.size[ra] -= uf.size[rb]
    uf.cyc[ra] = uf.u_cyc[t]
    uf.subs[ra] = uf.u_subs[t]


cdef void _dfs(UF *uf, long i, long m, long long mask, const long *cf, const long *ct,
               long long *out, long *n_out) noexcept nogil:
    if i == m:
        out[n_out[0]] = mask
        n_out[0] += 1
        return
    _dfs(uf, i + 1, m, mask, cf, ct, out, n_out)
    if _union(uf, cf[i], ct[i]):
        _dfs(uf, i + 1, m, mask | (1LL << i), cf, ct, out, n_out)
    _rollback(uf)


def radial_masks(long n_bus, is_sub, base_from, base_to, cand_from, cand_to):
    cdef cnp.ndarray[long, ndim=1] parent = np.arange(n_bus, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] size = np.ones(n_bus, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] subs = np.asarray(is_sub, dtype=np.int64).copy()
    cdef cnp.ndarray[char, ndim=1] cyc = np.zeros(n_bus, dtype=np.int8)
    cdef cnp.ndarray[long, ndim=1] bf = np.ascontiguousarray(base_from, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] bt = np.ascontiguousarray(base_to, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] cf = np.ascontiguousarray(cand_from, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] ct = np.ascontiguousarray(cand_to, dtype=np.int64)
    cdef long m = cf.shape[0]
    cdef long depth = bf.shape[0] + m + 1
    cdef cnp.ndarray[long, ndim=1] u_ra = np.zeros(depth, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] u_rb = np.zeros(depth, dtype=np.int64)
    cdef cnp.ndarray[char, ndim=1] u_cyc = np.zeros(depth, dtype=np.int8)
    cdef cnp.ndarray[long, ndim=1] u_subs = np.zeros(depth, dtype=np.int64)
    cdef UF uf
    uf.parent = &parent[0]
    uf.size = &size[0]
    uf.subs = &subs[0]
    uf.cyc = &cyc[0]
    uf.u_ra = &u_ra[0]
    uf.u_rb = &u_rb[0]
    uf.u_cyc = &u_cyc[0]
    uf.u_subs = &u_subs[0]
    uf.top = 0
    cdef long j
    for j in range(bf.shape[0]):
        if not _union(&uf, bf[j], bt[j]):
            return np.zeros(0, dtype=np.int64)
    cdef cnp.ndarray[long long, ndim=1] out = np.zeros(1 << m, dtype=np.int64)
    cdef long n_out = 0
    cdef long dummy = 0
    cdef const long *cfp = &dummy
    cdef const long *ctp = &dummy
    if m > 0:
        cfp = &cf[0]
        ctp = &ct[0]
    with nogil:
        _dfs(&uf, 0, m, 0, cfp, ctp, &out[0], &n_out)
    return np.sort(out[:n_out])


cdef struct Sweep:
    long n_bus
    long n_line
    const long *lf
    const long *lt
    const double *r
    const double *x
    const unsigned char *sub
    double base_mva
    # work buffers
    long *deg
    long *fill
    long *nbr
    long *nln
    long *par_bus
    long *par_line
    long *order
    long n_order
    double *sp
    double *sq
    # outputs
    unsigned char *energized
    double *fp
    double *fq
    double *u


cdef void _sweep(Sweep *w, const unsigned char *cl, const double *p, const double *q) noexcept nogil:
    cdef long n_bus = w.n_bus
    cdef long n_line = w.n_line
    cdef long l, k, a, b, s, head, tail, nb, e, pb
    cdef double sign, drop
    for k in range(n_bus + 1):
        w.deg[k] = 0
    for l in range(n_line):
        if cl[l]:
            w.deg[w.lf[l] + 1] += 1
            w.deg[w.lt[l] + 1] += 1
    for k in range(n_bus):
        w.deg[k + 1] += w.deg[k]
    for k in range(n_bus):
        w.fill[k] = w.deg[k]
    for l in range(n_line):
        if cl[l]:
            a = w.lf[l]
            b = w.lt[l]
            w.nbr[w.fill[a]] = b
            w.nln[w.fill[a]] = l
            w.fill[a] += 1
            w.nbr[w.fill[b]] = a
            w.nln[w.fill[b]] = l
            w.fill[b] += 1
    for k in range(n_bus):
        w.energized[k] = 0
        w.par_bus[k] = -1
        w.par_line[k] = -1
        w.sp[k] = p[k]
        w.sq[k] = q[k]
        w.u[k] = 0.0
    tail = 0
    for s in range(n_bus):
        if not w.sub[s] or w.energized[s]:
            continue
        w.energized[s] = 1
        head = tail
        w.order[tail] = s
        tail += 1
        while head < tail:
            k = w.order[head]
            head += 1
            for e in range(w.deg[k], w.deg[k + 1]):
                nb = w.nbr[e]
                if not w.energized[nb]:
                    w.energized[nb] = 1
                    w.par_bus[nb] = k
                    w.par_line[nb] = w.nln[e]
                    w.order[tail] = nb
                    tail += 1
    w.n_order = tail
    for l in range(n_line):
        w.fp[l] = 0.0
        w.fq[l] = 0.0
    for s in range(tail - 1, -1, -1):
        k = w.order[s]
        l = w.par_line[k]
        if l < 0:
            continue
        sign = 1.0 if w.lt[l] == k else -1.0
        w.fp[l] = sign * w.sp[k]
        w.fq[l] = sign * w.sq[k]
        pb = w.par_bus[k]
        w.sp[pb] += w.sp[k]
        w.sq[pb] += w.sq[k]
    for s in range(tail):
        k = w.order[s]
        l = w.par_line[k]
        if l < 0:
            w.u[k] = 1.0
            continue
        drop = 2.0 * (w.r[l] * w.fp[l] + w.x[l] * w.fq[l]) / w.base_mva
        if w.lt[l] == k:
            w.u[k] = w.u[w.par_bus[k]] - drop
        else:
            w.u[k] = w.u[w.par_bus[k]] + drop


cdef class _Workspace:
    cdef Sweep w
    cdef object keep

    def __init__(self, long n_bus, line_from, line_to, r, x, is_sub, double base_mva):
        lf = np.ascontiguousarray(line_from, dtype=np.int64)
        lt = np.ascontiguousarray(line_to, dtype=np.int64)
        rr = np.ascontiguousarray(r, dtype=np.float64)
        xx = np.ascontiguousarray(x, dtype=np.float64)
        sub = np.ascontiguousarray(is_sub, dtype=np.uint8)
        n_line = lf.shape[0]
        ibuf = [np.zeros(n_bus + 1, dtype=np.int64)] + [np.zeros(max(n_bus, 1), dtype=np.int64) for _ in range(4)]
        ebuf = [np.zeros(max(2 * n_line, 1), dtype=np.int64) for _ in range(2)]
        dbuf = [np.zeros(max(n_bus, 1)) for _ in range(3)] + [np.zeros(max(n_line, 1)) for _ in range(2)]
        energized = np.zeros(max(n_bus, 1), dtype=np.uint8)
        self.keep = (lf, lt, rr, xx, sub, ibuf, ebuf, dbuf, energized)
        cdef long[::1] v
        cdef double[::1] d
        cdef unsigned char[::1] c
        self.w.n_bus = n_bus
        self.w.n_line = n_line
        self.w.base_mva = base_mva
        v = lf
        self.w.lf = &v[0] if n_line else NULL
        v = lt
        self.w.lt = &v[0] if n_line else NULL
        d = rr
        self.w.r = &d[0] if n_line else NULL
        d = xx
        self.w.x = &d[0] if n_line else NULL
        c = sub
        self.w.sub = &c[0]
        v = ibuf[0]
        self.w.deg = &v[0]
        v = ibuf[1]
        self.w.fill = &v[0]
        v = ibuf[2]
        self.w.par_bus = &v[0]
        v = ibuf[3]
        self.w.par_line = &v[0]
        v = ibuf[4]
        self.w.order = &v[0]
        v = ebuf[0]
        self.w.nbr = &v[0]
        v = ebuf[1]
        self.w.nln = &v[0]
        d = dbuf[0]
        self.w.sp = &d[0]
        d = dbuf[1]
        self.w.sq = &d[0]
        d = dbuf[2]
        self.w.u = &d[0]
        d = dbuf[3]
        self.w.fp = &d[0]
        d = dbuf[4]
        self.w.fq = &d[0]
        c = energized
        self.w.energized = &c[0]

    def outputs(self):
        lf, lt, rr, xx, sub, ibuf, ebuf, dbuf, energized = self.keep
        n_bus, n_line = self.w.n_bus, self.w.n_line
        return (energized[:n_bus].copy(), dbuf[3][:n_line].copy(), dbuf[4][:n_line].copy(),
                dbuf[2][:n_bus].copy())


def tree_sweep(long n_bus, line_from, line_to, closed, r, x, p, q, is_sub, double base_mva):
    cdef _Workspace ws = _Workspace(n_bus, line_from, line_to, r, x, is_sub, base_mva)
    cdef const unsigned char[::1] cl = np.ascontiguousarray(closed, dtype=np.uint8)
    cdef const double[::1] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[::1] qq = np.ascontiguousarray(q, dtype=np.float64)
    if n_bus == 0:
        return ws.outputs()
    _sweep(&ws.w, &cl[0] if ws.w.n_line else NULL, &pp[0], &qq[0])
    return ws.outputs()


def config_sweep(long n_bus, line_from, line_to, closed_masks, r, x, p, q, is_sub, double base_mva,
                 s_max, vmin_sq, vmax_sq, double tol):
    cdef _Workspace ws = _Workspace(n_bus, line_from, line_to, r, x, is_sub, base_mva)
    cdef const unsigned char[:, ::1] masks = np.ascontiguousarray(closed_masks, dtype=np.uint8)
    cdef const double[::1] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[::1] qq = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[::1] sm = np.ascontiguousarray(s_max, dtype=np.float64)
    cdef const double[::1] vlo = np.ascontiguousarray(vmin_sq, dtype=np.float64)
    cdef const double[::1] vhi = np.ascontiguousarray(vmax_sq, dtype=np.float64)
    cdef long n_cfg = masks.shape[0]
    cdef long n_line = ws.w.n_line
    islanded_arr = np.zeros(n_cfg)
    ok_arr = np.zeros(n_cfg, dtype=np.uint8)
    lb_arr = np.zeros(n_cfg)
    path_arr = np.zeros(max(n_bus, 1))
    cdef double[::1] isl = islanded_arr
    cdef unsigned char[::1] ok = ok_arr
    cdef double[::1] lb = lb_arr
    cdef double[::1] path = path_arr
    cdef double root2 = sqrt(2.0)
    cdef double rho = 0.0
    cdef double s, acc, need, e
    cdef long c, k, l, o
    cdef bint good
    cdef Sweep *w = &ws.w
    if n_cfg == 0 or n_bus == 0:
        return islanded_arr, ok_arr, lb_arr
    for k in range(n_bus):
        if pp[k] > 0 and fabs(qq[k]) / pp[k] > rho:
            rho = fabs(qq[k]) / pp[k]
    with nogil:
        for c in range(n_cfg):
            _sweep(w, &masks[c, 0] if n_line else NULL, &pp[0], &qq[0])
            acc = 0.0
            for k in range(n_bus):
                if not w.energized[k]:
                    acc = acc + pp[k]
            isl[c] = acc
            good = True
            need = 0.0
            for l in range(n_line):
                s = sm[l] * (1 + tol)
                if fabs(w.fp[l]) > s or fabs(w.fq[l]) > s:
                    good = False
                if fabs(w.fp[l] + w.fq[l]) > root2 * s or fabs(w.fp[l] - w.fq[l]) > root2 * s:
                    good = False
                e = fabs(w.fp[l]) - sm[l]
                if e > need:
                    need = e
                if rho > 0:
                    e = (fabs(w.fq[l]) - sm[l]) / rho
                    if e > need:
                        need = e
                e = (fabs(w.fp[l] + w.fq[l]) - root2 * sm[l]) / (1 + rho)
                if e > need:
                    need = e
                e = (fabs(w.fp[l] - w.fq[l]) - root2 * sm[l]) / (1 + rho)
                if e > need:
                    need = e
            for o in range(w.n_order):
                k = w.order[o]
                l = w.par_line[k]
                if l < 0:
                    path[k] = 0.0
                    continue
                path[k] = path[w.par_bus[k]] + 2.0 * (w.r[l] + w.x[l] * rho) / base_mva
                if w.u[k] < vlo[k] * (1 - tol) or w.u[k] > vhi[k] * (1 + tol):
                    good = False
                if path[k] > 0:
                    e = (vlo[k] - w.u[k]) / path[k]
                    if e > need:
                        need = e
            ok[c] = good
            lb[c] = 0.0 if good else need
    return islanded_arr, ok_arr, lb_arr


def subtree_masks(long n_bus, line_from, line_to, closed_masks, is_sub, cand):
    cdef long n_line = len(line_from)
    zeros = np.zeros(max(n_line, 1))
    cdef _Workspace ws = _Workspace(n_bus, line_from, line_to, zeros[:n_line], zeros[:n_line],
                                    is_sub, 1.0)
    cdef const unsigned char[:, ::1] masks = np.ascontiguousarray(closed_masks, dtype=np.uint8)
    cdef const long[::1] cl = np.ascontiguousarray(cand, dtype=np.int64)
    cdef long n_cfg = masks.shape[0]
    cdef long n_cand = cl.shape[0]
    out_arr = np.zeros((n_cfg, n_cand, n_bus), dtype=np.uint8)
    if n_cfg == 0 or n_cand == 0 or n_bus == 0:
        return out_arr
    pq_arr = np.zeros(n_bus)
    cdef const double[::1] pq = pq_arr
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef long c, j, l, s, k, child
    cdef Sweep *w = &ws.w
    with nogil:
        for c in range(n_cfg):
            _sweep(w, &masks[c, 0] if n_line else NULL, &pq[0], &pq[0])
            for j in range(n_cand):
                l = cl[j]
                if w.energized[w.lt[l]] and w.par_line[w.lt[l]] == l:
                    child = w.lt[l]
                elif w.energized[w.lf[l]] and w.par_line[w.lf[l]] == l:
                    child = w.lf[l]
                else:
                    continue
                for s in range(w.n_order):
                    k = w.order[s]
                    if k == child or (w.par_bus[k] >= 0 and out[c, j, w.par_bus[k]]):
                        out[c, j, k] = 1
    return out_arr
