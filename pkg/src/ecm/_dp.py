"""Numba kernels for lattice dynamic-programming alignment of SRSFs.

The lattice is the ``n x n`` grid of node pairs ``(i, j)`` meaning
``gamma(t_i) = t_j``. A path runs from ``(0, 0)`` to ``(n-1, n-1)`` through
nodes that strictly increase in both coordinates; each step ``(a, b)`` has
``1 <= a, b <= max_step``. Only coprime steps are relaxed: a non-coprime step
traces the same polyline through lattice nodes as a chain of its coprime
sub-steps and has the same cost.

The cost of a step from ``(k, l)`` to ``(i, j)`` is the trapezoidal sum over
the nodes ``s = k..i`` of ``(q1[s] - sqrt(b/a) * q2(l + b/a * (s - k)))**2``
times the grid spacing, with ``q2`` linearly interpolated in index space.
Summed along a path this is the trapezoidal rule for
``|| q1 - (q2 o gamma) sqrt(gamma') ||^2`` with one-sided slopes at nodes.
"""

import os

import numba
import numpy as np
from numba import njit, prange

# Prefer OpenMP over probing TBB, which warns when the installed TBB is old.
if "NUMBA_THREADING_LAYER" not in os.environ:
    try:
        from numba.np.ufunc import omppool  # noqa: F401

        numba.config.THREADING_LAYER = "omp"
    except ImportError:
        pass


@njit(cache=True)
def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


@njit(cache=True)
def step_table(max_step):
    out = np.empty((max_step * max_step, 2), dtype=np.int64)
    m = 0
    for a in range(1, max_step + 1):
        for b in range(1, max_step + 1):
            if _gcd(a, b) == 1:
                out[m, 0] = a
                out[m, 1] = b
                m += 1
    return out[:m]


@njit(cache=True)
def interp_table(q2, steps):
    """Scaled ``q2`` values visited by every step, for every origin column.

    Row ``start[m] + o`` holds ``sqrt(b/a) * q2(l + b*o/a)`` for ``l`` in
    ``0..n-b-1`` for the ``o``-th node of step ``m = (a, b)``.
    """
    n = q2.shape[0]
    nsteps = steps.shape[0]
    start = np.empty(nsteps + 1, dtype=np.int64)
    total = 0
    for m in range(nsteps):
        start[m] = total
        total += steps[m, 0] + 1
    start[nsteps] = total
    table = np.zeros((total, n))
    q2p = np.empty(n + 1)
    q2p[:n] = q2
    q2p[n] = q2[n - 1]
    for m in range(nsteps):
        a = steps[m, 0]
        b = steps[m, 1]
        rt = np.sqrt(b / a)
        for o in range(a + 1):
            io = (b * o) // a
            f = ((b * o) % a) / a
            row = table[start[m] + o]
            for l in range(n - b):
                row[l] = rt * (q2p[l + io] + f * (q2p[l + io + 1] - q2p[l + io]))
    return table, start


@njit(cache=True)
def _step_cost(q1, table, start, steps, m, k, l, h):
    a = steps[m, 0]
    c = 0.0
    for o in range(a + 1):
        w = h * (0.5 if (o == 0 or o == a) else 1.0)
        r = q1[k + o] - table[start[m] + o, l]
        c += w * r * r
    return c


@njit(cache=True)
def dp_lattice(q1, q2, steps):
    """Return (cost, path_i, path_j) of the optimal lattice path.

    Energies are relaxed row by row: every predecessor of a node in row ``k``
    lies in an earlier row, so a row is final before it is pushed. The path
    is recovered afterwards by picking, at each node, the predecessor whose
    energy plus step cost reproduces the node's energy.
    """
    n = q1.shape[0]
    h = 1.0 / (n - 1)
    nsteps = steps.shape[0]
    table, start = interp_table(q2, steps)
    energy = np.full((n, n), np.inf)
    energy[0, 0] = 0.0
    row = np.empty(n)
    for k in range(n - 1):
        ek = energy[k]
        for m in range(nsteps):
            a = steps[m, 0]
            b = steps[m, 1]
            i = k + a
            if i >= n:
                continue
            width = n - b
            for l in range(width):
                row[l] = 0.0
            for o in range(a + 1):
                w = h * (0.5 if (o == 0 or o == a) else 1.0)
                qk = q1[k + o]
                vals = table[start[m] + o]
                for l in range(width):
                    r = qk - vals[l]
                    row[l] += w * r * r
            target = energy[i, b:]
            for l in range(width):
                target[l] = min(target[l], ek[l] + row[l])
    best = energy[n - 1, n - 1]

    # prefer the identity path on ties (e.g. when both inputs are constant)
    m11 = -1
    for m in range(nsteps):
        if steps[m, 0] == 1 and steps[m, 1] == 1:
            m11 = m
    if m11 >= 0:
        e_id = 0.0
        for k in range(n - 1):
            e_id += _step_cost(q1, table, start, steps, m11, k, k, h)
        if e_id <= best:
            ident = np.arange(n)
            return e_id, ident, ident.copy()

    # backtrack
    rev_i = np.empty(n, dtype=np.int64)
    rev_j = np.empty(n, dtype=np.int64)
    i = n - 1
    j = n - 1
    length = 0
    while True:
        rev_i[length] = i
        rev_j[length] = j
        length += 1
        if i == 0:
            break
        best_m = -1
        best_gap = np.inf
        for m in range(nsteps):
            k = i - steps[m, 0]
            l = j - steps[m, 1]
            if k < 0 or l < 0 or energy[k, l] == np.inf:
                continue
            gap = abs(energy[k, l] + _step_cost(q1, table, start, steps, m, k, l, h) - energy[i, j])
            if gap < best_gap:
                best_gap = gap
                best_m = m
        i -= steps[best_m, 0]
        j -= steps[best_m, 1]
    path_i = rev_i[:length][::-1].copy()
    path_j = rev_j[:length][::-1].copy()
    return best, path_i, path_j


@njit(cache=True)
def path_to_warp(path_i, path_j, n):
    """Sample the piecewise-linear lattice path at every grid node, in [0, 1]."""
    gam = np.empty(n)
    step = 1.0 / (n - 1)  # same rounding as np.linspace, so diagonal nodes match the grid
    for p in range(path_i.shape[0] - 1):
        k = path_i[p]
        l = path_j[p]
        a = path_i[p + 1] - k
        b = path_j[p + 1] - l
        for s in range(k, k + a + 1):
            gam[s] = (l + (b * (s - k)) / a) * step
    gam[0] = 0.0
    gam[n - 1] = 1.0
    return gam


@njit(cache=True)
def _interp_slope(q, x, h):
    """Value and slope of the linear interpolant of ``q`` at ``x`` in [0, 1]."""
    n = q.shape[0]
    k = int(x / h)
    if k >= n - 1:
        k = n - 2
    if k < 0:
        k = 0
    slope = (q[k + 1] - q[k]) / h
    return q[k] + (x - k * h) * slope, slope


@njit(cache=True)
def _residuals(q1, q2, x, w, h, r, val, dval, dgam):
    n = q1.shape[0]
    e = 0.0
    for s in range(n):
        if s == 0:
            d = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h)
        elif s == n - 1:
            d = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * h)
        else:
            d = (x[s + 1] - x[s - 1]) / (2.0 * h)
        if d < 0.0:
            d = 0.0
        v, dv = _interp_slope(q2, x[s], h)
        val[s] = v
        dval[s] = dv
        dgam[s] = d
        rs = q1[s] - v * np.sqrt(d)
        r[s] = rs
        e += w[s] * rs * rs
    return e


@njit(cache=True)
def refine_warp(q1, q2, gam, max_iter):
    """Levenberg-Marquardt polish of a warp's interior node values.

    Minimizes the trapezoidal ``|| q1 - (q2 o gam) sqrt(gam') ||^2`` with the
    same interpolation and derivative rules as the grid group action. Steps
    that break strict monotonicity or do not lower the energy are rejected.
    """
    n = q1.shape[0]
    h = 1.0 / (n - 1)
    w = np.full(n, h)
    w[0] = 0.5 * h
    w[n - 1] = 0.5 * h
    x = gam.copy()
    r = np.empty(n)
    val = np.empty(n)
    dval = np.empty(n)
    dgam = np.empty(n)
    energy = _residuals(q1, q2, x, w, h, r, val, dval, dgam)
    if max_iter <= 0 or n < 4:
        return x, energy

    m = n - 2  # unknowns x[1..n-2] -> index s-1
    # jacobian of row s: up to three entries at unknown columns c0..c0+2
    jc = np.empty((n, 3))
    jstart = np.empty(n, dtype=np.int64)
    band = np.zeros((3, m))  # band[k, c] = A[c, c+k]
    grad = np.empty(m)
    diag_l = np.empty((3, m))
    rhs = np.empty(m)
    step = np.empty(m)
    xt = np.empty(n)
    rt = np.empty(n)
    vt = np.empty(n)
    dvt = np.empty(n)
    dgt = np.empty(n)
    mu = 1e-3
    for _ in range(max_iter):
        # jacobian of the residual q1 - Q (sign folded into grad below)
        for s in range(n):
            jc[s, 0] = 0.0
            jc[s, 1] = 0.0
            jc[s, 2] = 0.0
            d = dgam[s]
            amp = 0.0
            if d > 1e-300:
                amp = val[s] / (2.0 * np.sqrt(d)) / (2.0 * h)
            if s == 0:
                jstart[s] = 1  # columns x1, x2
                jc[s, 0] = amp * 4.0
                jc[s, 1] = -amp
            elif s == n - 1:
                jstart[s] = n - 3  # columns x_{n-3}, x_{n-2}
                jc[s, 0] = amp
                jc[s, 1] = -4.0 * amp
            else:
                jstart[s] = s - 1  # columns x_{s-1}, x_s, x_{s+1}
                jc[s, 0] = -amp
                jc[s, 1] = dval[s] * np.sqrt(d)
                jc[s, 2] = amp
        band[:, :] = 0.0
        grad[:] = 0.0
        for s in range(n):
            for a in range(3):
                ca = jstart[s] + a
                if ca < 1 or ca > n - 2 or jc[s, a] == 0.0:
                    continue
                # dQ/dx; residual is q1 - Q so dE/dx = -2 w r dQ/dx
                grad[ca - 1] -= w[s] * r[s] * jc[s, a]
                for b in range(a, 3):
                    cb = jstart[s] + b
                    if cb < 1 or cb > n - 2:
                        continue
                    band[cb - ca, ca - 1] += w[s] * jc[s, a] * jc[s, b]
        accepted = False
        new_energy = energy
        for _try in range(12):
            # banded Cholesky of (A + mu * diag(A) + tiny) with bandwidth 2
            ok = True
            for c in range(m):
                diag_l[0, c] = band[0, c] * (1.0 + mu) + 1e-14
                diag_l[1, c] = band[1, c] if c + 1 < m else 0.0
                diag_l[2, c] = band[2, c] if c + 2 < m else 0.0
            for c in range(m):
                # L stored in place: diag_l[k, c] = L[c+k, c]
                s0 = diag_l[0, c]
                if c >= 1:
                    s0 -= diag_l[1, c - 1] ** 2
                if c >= 2:
                    s0 -= diag_l[2, c - 2] ** 2
                if s0 <= 0.0:
                    ok = False
                    break
                lcc = np.sqrt(s0)
                diag_l[0, c] = lcc
                if c + 1 < m:
                    s1 = diag_l[1, c]
                    if c >= 1:
                        s1 -= diag_l[2, c - 1] * diag_l[1, c - 1]
                    diag_l[1, c] = s1 / lcc
                if c + 2 < m:
                    diag_l[2, c] = diag_l[2, c] / lcc
            if not ok:
                mu *= 4.0
                continue
            for c in range(m):
                rhs[c] = -grad[c]
            # forward substitution L y = rhs
            for c in range(m):
                v = rhs[c]
                if c >= 1:
                    v -= diag_l[1, c - 1] * rhs[c - 1]
                if c >= 2:
                    v -= diag_l[2, c - 2] * rhs[c - 2]
                rhs[c] = v / diag_l[0, c]
            # back substitution L^T z = y
            for c in range(m - 1, -1, -1):
                v = rhs[c]
                if c + 1 < m:
                    v -= diag_l[1, c] * step[c + 1]
                if c + 2 < m:
                    v -= diag_l[2, c] * step[c + 2]
                step[c] = v / diag_l[0, c]
            xt[0] = 0.0
            xt[n - 1] = 1.0
            mono = True
            for c in range(m):
                xt[c + 1] = x[c + 1] + step[c]
            for s in range(n - 1):
                if xt[s + 1] <= xt[s]:
                    mono = False
                    break
            if mono:
                et = _residuals(q1, q2, xt, w, h, rt, vt, dvt, dgt)
                if et < energy:
                    new_energy = et
                    accepted = True
                    break
            mu *= 4.0
        if not accepted:
            break
        gain = energy - new_energy
        x[:] = xt
        r[:] = rt
        val[:] = vt
        dval[:] = dvt
        dgam[:] = dgt
        energy = new_energy
        mu = max(mu / 3.0, 1e-9)
        if gain <= 1e-10 * energy + 1e-300:
            break
    return x, energy


@njit(cache=True, parallel=True)
def align_batch(q_ref, qs, steps, refine_iters):
    """DP alignment plus warp refinement of every row of ``qs`` to ``q_ref``."""
    count, n = qs.shape
    energies = np.empty(count)
    warps = np.empty((count, n))
    for r in prange(count):
        c, pi, pj = dp_lattice(q_ref, qs[r], steps)
        gam = path_to_warp(pi, pj, n)
        gam, e = refine_warp(q_ref, qs[r], gam, refine_iters)
        energies[r] = e
        warps[r] = gam
    return energies, warps

