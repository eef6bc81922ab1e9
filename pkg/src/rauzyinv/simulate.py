"""
Compiled floating-point kernels for long induction orbits.

Orbits are stored as unit-scale representatives of the Teichmueller flow:
when the lengths get small they are rescaled to norm one and ``tau`` is
rescaled inversely, the logarithm of the factor being elapsed flow time.
After each step the lengths and ``tau`` are projected back onto the balance
hyperplane of the current vertex, which keeps rounding from pushing the
orbit into regions the exact dynamics never visits.

Same-side runs are accelerated: on a run only the winner coordinate changes,
so whole periods of the run are applied at once.
"""

import numpy as np
from numba import njit

from . import linalg
from .suspension import omega


class Tables:
    """Integer and float arrays describing a compiled Rauzy diagram."""

    def __init__(self, compiled):
        self.compiled = compiled
        verts = compiled.vertices
        nv = len(verts)
        d = verts[0].d
        self.d = d
        self.step_end = np.full((nv, 2), -1, dtype=np.int64)
        self.step_w = np.zeros((nv, 2), dtype=np.int64)
        self.step_l = np.zeros((nv, 2), dtype=np.int64)
        self.ends = np.array(compiled.ends, dtype=np.int64)
        self.bal = np.zeros((nv, d))
        self.baln = np.zeros((nv, d))
        self.omega = np.zeros((nv, d, d))
        for k, v in enumerate(verts):
            for s in (0, 1):
                e = compiled.step[k][s]
                if e is not None:
                    self.step_end[k, s] = e[0]
                    self.step_w[k, s] = e[1]
                    self.step_l[k, s] = e[2]
            bv = np.array(v.balance_vector(), dtype=float)
            self.bal[k] = bv
            self.baln[k] = bv / bv.dot(bv)
            self.omega[k] = np.array(omega(v), dtype=float)
        self.cyc_len = np.zeros((nv, 2), dtype=np.int64)
        self.cyc_cnt = np.zeros((nv, 2, d))
        for k in range(nv):
            for s in (0, 1):
                verts_k, losers, cs = _chain(compiled, k, s)
                if cs == 0:
                    self.cyc_len[k, s] = len(verts_k)
                    for l in losers:
                        self.cyc_cnt[k, s, l] += 1


def _chain(compiled, v, side):
    verts, losers, seen = [], [], {}
    cur = v
    while True:
        if cur in seen:
            return verts, losers, seen[cur]
        e = compiled.step[cur][side]
        if e is None:
            return verts, losers, None
        seen[cur] = len(verts)
        verts.append(cur)
        losers.append(e[2])
        cur = e[0]


class SectionTables:
    """Membership data for a union of relabeled copies of one cylinder."""

    def __init__(self, tables, copies, margin):
        nv = len(tables.compiled.vertices)
        d = tables.d
        self.is_sec = np.zeros(nv, dtype=np.bool_)
        self.sec_mat = np.zeros((nv, d, d))
        for path in copies:
            k = tables.compiled.index[path.start]
            self.is_sec[k] = True
            inv = linalg.inverse(linalg.transpose(path.matrix()))
            self.sec_mat[k] = np.array([[float(x) for x in row] for row in inv])
        self.margin = margin


@njit(cache=True, nogil=True)
def _project(x, bal, baln, v, d):
    c = 0.0
    for k in range(d):
        c += bal[v, k] * x[k]
    if c != 0.0:
        for k in range(d):
            x[k] -= c * baln[v, k]


@njit(cache=True, nogil=True)
def _in_section(lam, v, is_sec, sec_mat, d):
    if not is_sec[v]:
        return False
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += sec_mat[v, i, j] * lam[j]
        if s <= 0.0:
            return False
    return True


@njit(cache=True, nogil=True)
def _skip(lam, tau, v, side, w, cyc_len, cyc_cnt, margin, d, floor):
    """Number of run periods that can be applied in bulk (already applied on return)."""
    p = cyc_len[v, side]
    if p == 0:
        return 0
    s = 0.0
    top = 0.0
    st = 0.0
    for k in range(d):
        c = cyc_cnt[v, side, k]
        if c > 0:
            s += c * lam[k]
            st += c * tau[k]
            if lam[k] > top:
                top = lam[k]
    if s <= 0.0:
        return 0
    m = int((lam[w] - top) / s) - 1 - margin
    if floor > 0.0:
        tot = 0.0
        for k in range(d):
            tot += lam[k]
        m2 = int((tot - floor) / s) - 1
        if m2 < m:
            m = m2
    if m <= 0:
        return 0
    lam[w] -= m * s
    tau[w] -= m * st
    return m * p


@njit(cache=True, nogil=True)
def section_returns(lam0, tau0, v0, n_returns, max_iter,
                    step_end, step_w, step_l, ends, bal, baln, cyc_len, cyc_cnt,
                    is_sec, sec_mat, margin):
    """Successive return times to the section from one starting point.

    ``lam0`` and ``tau0`` are updated in place to the last point reached.
    Returns ``(r, steps, verts, status)``; ``status`` is 0 on success, 1 on a
    tie or undefined operation, 2 when ``max_iter`` iterations were used.
    """
    d = lam0.shape[0]
    lam = lam0
    tau = tau0
    r = np.zeros(n_returns)
    steps = np.zeros(n_returns, dtype=np.int64)
    verts = np.zeros(n_returns, dtype=np.int64)
    v = v0
    logscale = 0.0
    nstep = 0
    got = 0
    first = True
    for it in range(max_iter):
        if not first and _in_section(lam, v, is_sec, sec_mat, d):
            tot = 0.0
            for k in range(d):
                tot += lam[k]
            logscale -= np.log(tot)
            for k in range(d):
                lam[k] /= tot
                tau[k] *= tot
            r[got] = logscale
            steps[got] = nstep
            verts[got] = v
            got += 1
            if got == n_returns:
                return r, steps, verts, 0
            logscale = 0.0
            nstep = 0
        first = False
        a = ends[v, 0]
        b = ends[v, 1]
        if lam[a] == lam[b]:
            return r[:got], steps[:got], verts[:got], 1
        side = 0 if lam[a] > lam[b] else 1
        nv = step_end[v, side]
        if nv < 0:
            return r[:got], steps[:got], verts[:got], 1
        w = step_w[v, side]
        l = step_l[v, side]
        nstep += _skip(lam, tau, v, side, w, cyc_len, cyc_cnt, margin, d, 0.0)
        lam[w] -= lam[l]
        tau[w] -= tau[l]
        v = nv
        nstep += 1
        _project(lam, bal, baln, v, d)
        _project(tau, bal, baln, v, d)
        tot = 0.0
        for k in range(d):
            tot += lam[k]
        if tot < 1e-6:
            logscale -= np.log(tot)
            for k in range(d):
                lam[k] /= tot
                tau[k] *= tot
    return r[:got], steps[:got], verts[:got], 2


@njit(cache=True, nogil=True)
def observe_states(lam0, tau0, v0, times, max_iter,
                   step_end, step_w, step_l, ends, bal, baln, cyc_len, cyc_cnt):
    """Flow states in the fundamental domain at each of the nondecreasing ``times``.

    The state at time ``t`` is the last point of the induction orbit whose
    lengths, scaled by ``e^t``, still have norm at least one.  Returns
    ``(lams, taus, verts, status)`` with the scaling already applied.
    """
    d = lam0.shape[0]
    nt = times.shape[0]
    lam = lam0.copy()
    tau = tau0.copy()
    lams = np.full((nt, d), np.nan)
    taus = np.full((nt, d), np.nan)
    verts = np.full(nt, -1, dtype=np.int64)
    v = v0
    logscale = 0.0
    j = 0
    for it in range(max_iter):
        if j == nt:
            return lams, taus, verts, 0
        tot = 0.0
        for k in range(d):
            tot += lam[k]
        a = ends[v, 0]
        b = ends[v, 1]
        if lam[a] == lam[b]:
            return lams, taus, verts, 1
        side = 0 if lam[a] > lam[b] else 1
        nv = step_end[v, side]
        if nv < 0:
            return lams, taus, verts, 1
        w = step_w[v, side]
        l = step_l[v, side]
        floor = np.exp(-(times[j] - logscale))
        if tot - lam[l] < floor:
            scale = np.exp(times[j] - logscale)
            for k in range(d):
                lams[j, k] = lam[k] * scale
                taus[j, k] = tau[k] / scale
            verts[j] = v
            j += 1
            continue
        _skip(lam, tau, v, side, w, cyc_len, cyc_cnt, 0, d, floor + lam[l])
        lam[w] -= lam[l]
        tau[w] -= tau[l]
        v = nv
        _project(lam, bal, baln, v, d)
        _project(tau, bal, baln, v, d)
        tot = 0.0
        for k in range(d):
            tot += lam[k]
        if tot < 1e-6:
            logscale -= np.log(tot)
            for k in range(d):
                lam[k] /= tot
                tau[k] *= tot
    return lams, taus, verts, 2
