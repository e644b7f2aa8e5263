"""Compiled inner loops.

Events are stored column-wise: time, kind (+1 arrival / -1 service) and the
pre-jump state ``(k, x, y)``. Post-jump states are recomputed on the fly.
Y-feature means (see :mod:`mfqueue.intensity`) stand in for the measure.
"""
import numba as nb
import numpy as np

from .rng import exponential, stream_key, uniform

FY_QUEUE = 1
FX_AGE = 1
BOUND_SLACK = 1e-12

WINDOW_INIT = 0xFFFF0001
WINDOW_REPLICA = 0xFFFF0002


# -- small helpers ------------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _post(kind, k, x, y):
    if kind > 0:
        return k + 1, 0.0, y
    return k - 1, x, 0.0


@nb.njit(cache=True, inline="always")
def _drift(k, x, y, d):
    if k > 0:
        return k, x + d, y + d
    return k, x + d, 0.0


@nb.njit(cache=True)
def _rates(k, x, y, m, side, coef, fx, fyi):
    lp = 0.0
    lm = 0.0
    for j in range(side.size):
        v = coef[j] * m[fyi[j]]
        if fx[j] == FX_AGE:
            v *= 1.0 - np.exp(-y)
        if side[j] > 0:
            lp += v
        else:
            lm += v
    if k == 0:
        lm = 0.0
    return lp, lm


@nb.njit(cache=True)
def _means_from_sums(isum, n, feat_kind, feat_kmax, out):
    for f in range(feat_kind.size):
        if feat_kind[f] == FY_QUEUE:
            out[f] = isum[f] / (feat_kmax[f] * n)
        else:
            out[f] = 1.0


@nb.njit(cache=True, inline="always")
def _feat_int(k, kind, kmax):
    if kind == FY_QUEUE:
        return min(k, kmax)
    return 1


@nb.njit(cache=True)
def _last_leq(times, lo, hi, s):
    """Largest index in [lo, hi) with times[i] <= s, or lo - 1."""
    a, b = lo, hi
    while a < b:
        mid = (a + b) >> 1
        if times[mid] <= s:
            a = mid + 1
        else:
            b = mid
    return a - 1


@nb.njit(cache=True)
def _last_lt(times, lo, hi, s):
    a, b = lo, hi
    while a < b:
        mid = (a + b) >> 1
        if times[mid] < s:
            a = mid + 1
        else:
            b = mid
    return a - 1


@nb.njit(cache=True)
def _state_from(idx, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, ak, ax, ay, at, s):
    if idx < lo:
        return _drift(ak, ax, ay, s - at)
    k, x, y = _post(ev_kind[idx], ev_k[idx], ev_x[idx], ev_y[idx])
    return _drift(k, x, y, s - ev_t[idx])


@nb.njit(cache=True)
def _state_right(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, ak, ax, ay, at, s):
    idx = _last_leq(ev_t, lo, hi, s)
    return _state_from(idx, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, ak, ax, ay, at, s)


@nb.njit(cache=True)
def _state_left(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, ak, ax, ay, at, s):
    idx = _last_lt(ev_t, lo, hi, s)
    return _state_from(idx, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, ak, ax, ay, at, s)


@nb.njit(cache=True)
def _grow(buf, n):
    p, t, kind, k, x, y = buf
    if n < p.size:
        return buf
    cap = max(16, 2 * p.size)
    p2 = np.empty(cap, np.int64)
    t2 = np.empty(cap, np.float64)
    kind2 = np.empty(cap, np.int8)
    k2 = np.empty(cap, np.int64)
    x2 = np.empty(cap, np.float64)
    y2 = np.empty(cap, np.float64)
    p2[:n] = p[:n]
    t2[:n] = t[:n]
    kind2[:n] = kind[:n]
    k2[:n] = k[:n]
    x2[:n] = x[:n]
    y2[:n] = y[:n]
    return (p2, t2, kind2, k2, x2, y2)


@nb.njit(cache=True)
def new_buffer(cap):
    cap = max(cap, 16)
    return (np.empty(cap, np.int64), np.empty(cap, np.float64), np.empty(cap, np.int8),
            np.empty(cap, np.int64), np.empty(cap, np.float64), np.empty(cap, np.float64))


@nb.njit(cache=True)
def _push(buf, n, p, t, kind, k, x, y):
    buf = _grow(buf, n)
    buf[0][n] = p
    buf[1][n] = t
    buf[2][n] = kind
    buf[3][n] = k
    buf[4][n] = x
    buf[5][n] = y
    return buf


@nb.njit(cache=True)
def _check_bound(lp, lm, total_bar):
    if lp + lm > total_bar * (1.0 + BOUND_SLACK):
        raise ValueError("kernel violates declared bounds: total rate exceeds total_bar")


# -- initial states -----------------------------------------------------------

@nb.njit(cache=True)
def sample_initial(seed, n, cum_w, ak, ax, ay):
    k0 = np.empty(n, np.int64)
    x0 = np.empty(n)
    y0 = np.empty(n)
    for i in range(n):
        key = stream_key(seed, np.uint64(i), np.uint64(WINDOW_INIT))
        u = uniform(key, 0) * cum_w[-1]
        j = np.searchsorted(cum_w, u)
        if j >= cum_w.size:
            j = cum_w.size - 1
        k0[i] = ak[j]
        x0[i] = ax[j]
        y0[i] = ay[j]
    return k0, x0, y0


# -- self-consistent mode -----------------------------------------------------

@nb.njit(cache=True)
def _sift_down(heap, key, pos, n):
    item = heap[pos]
    kv = key[item]
    while True:
        c = 2 * pos + 1
        if c >= n:
            break
        if c + 1 < n and key[heap[c + 1]] < key[heap[c]]:
            c += 1
        if key[heap[c]] < kv:
            heap[pos] = heap[c]
            pos = c
        else:
            break
    heap[pos] = item


@nb.njit(cache=True)
def simulate_self_consistent(seed, T, k0, x0, y0, side, coef, fx, fyi, feat_kind, feat_kmax,
                             total_bar, cap):
    """Global event queue over N per-particle dominating clocks.

    At every candidate the rates use the current ensemble empirical measure.
    Returns the event buffer (global time order) and its length.
    """
    n = k0.size
    F = feat_kind.size
    ck = k0.copy()
    cx = x0.copy()
    cy = y0.copy()
    ct = np.zeros(n)
    isum = np.zeros(F, np.int64)
    for i in range(n):
        for f in range(F):
            isum[f] += _feat_int(ck[i], feat_kind[f], feat_kmax[f])
    m = np.empty(F)
    _means_from_sums(isum, n, feat_kind, feat_kmax, m)
    buf = new_buffer(cap)
    ne = 0
    if total_bar <= 0.0:
        return buf, ne
    keys = np.empty(n, np.uint64)
    cnt = np.zeros(n, np.int64)
    nxt = np.empty(n)
    for i in range(n):
        keys[i] = stream_key(seed, np.uint64(i), np.uint64(0))
        nxt[i] = exponential(keys[i], 0, total_bar)
        cnt[i] = 1
    heap = np.argsort(nxt)
    while True:
        i = heap[0]
        t = nxt[i]
        if t > T:
            break
        k, x, y = _drift(ck[i], cx[i], cy[i], t - ct[i])
        lp, lm = _rates(k, x, y, m, side, coef, fx, fyi)
        _check_bound(lp, lm, total_bar)
        v = uniform(keys[i], cnt[i]) * total_bar
        cnt[i] += 1
        kind = 0
        if v <= lp:
            kind = 1
        elif v <= lp + lm:
            kind = -1
        if kind != 0:
            buf = _push(buf, ne, i, t, kind, k, x, y)
            ne += 1
            nk, nx_, ny = _post(kind, k, x, y)
            for f in range(F):
                isum[f] += _feat_int(nk, feat_kind[f], feat_kmax[f]) - _feat_int(k, feat_kind[f], feat_kmax[f])
            _means_from_sums(isum, n, feat_kind, feat_kmax, m)
            ck[i] = nk
            cx[i] = nx_
            cy[i] = ny
            ct[i] = t
        nxt[i] = t + exponential(keys[i], cnt[i], total_bar)
        cnt[i] += 1
        _sift_down(heap, nxt, 0, n)
    return buf, ne


# -- independent-particle segment (frozen delay and given flow) ----------------

@nb.njit(cache=True)
def _segment(buf, ne, p, key, t_start, t_end, ck, cx, cy, ct,
             lag, h_t, h_kind, h_k, h_x, h_y, h_lo, h_hi, hk, hx, hy, ht,
             grid, table, side, coef, fx, fyi, total_bar, upto, hist_end):
    """Thin one particle over (t_start, t_end].

    With ``lag > 0`` intensities use the particle's own state at ``(t - lag)+``
    (looked up in the history arrays, valid up to ``hist_end``) and ``table``
    at the grid index of ``(t - lag)+``; with ``lag == 0`` they use the
    current state and ``table`` at the grid index of ``t``. ``upto`` is the
    last grid index the table is valid for. Returns the buffer, its length and the updated anchor state.
    """
    if total_bar <= 0.0:
        return buf, ne, ck, cx, cy, ct
    c = 0
    t = t_start + exponential(key, c, total_bar)
    c += 1
    while t <= t_end:
        k, x, y = _drift(ck, cx, cy, t - ct)
        if lag > 0.0:
            s = max(t - lag, 0.0)
            if s > hist_end:
                # t <= hist_end + lag up to rounding of the window bounds
                if s > hist_end + 1e-9 * max(1.0, t):
                    raise RuntimeError("frozen-delay lookup beyond completed history")
                s = hist_end
            dk, dx, dy = _state_right(h_t, h_kind, h_k, h_x, h_y, h_lo, h_hi, hk, hx, hy, ht, s)
        else:
            s = t
            dk, dx, dy = k, x, y
        gi = np.searchsorted(grid, s, side="right") - 1
        if gi > upto:
            raise RuntimeError("measure lookup beyond recorded flow")
        lp, lm = _rates(dk, dx, dy, table[gi], side, coef, fx, fyi)
        _check_bound(lp, lm, total_bar)
        if k == 0:
            lm = 0.0
        v = uniform(key, c) * total_bar
        c += 1
        kind = 0
        if v <= lp:
            kind = 1
        elif v <= lp + lm:
            kind = -1
        if kind != 0:
            buf = _push(buf, ne, p, t, kind, k, x, y)
            ne += 1
            ck, cx, cy = _post(kind, k, x, y)
            ct = t
        t += exponential(key, c, total_bar)
        c += 1
    return buf, ne, ck, cx, cy, ct


@nb.njit(cache=True, nogil=True)
def simulate_given_flow(seed, T, p_lo, p_hi, k0, x0, y0, grid, table, side, coef, fx, fyi,
                        total_bar, cap):
    buf = new_buffer(cap)
    ne = 0
    e_t = np.empty(0)
    e_kind = np.empty(0, np.int8)
    e_k = np.empty(0, np.int64)
    e_x = np.empty(0)
    upto = grid.size - 1
    for p in range(p_lo, p_hi):
        key = stream_key(seed, np.uint64(p), np.uint64(0))
        buf, ne, _, _, _, _ = _segment(buf, ne, p, key, 0.0, T, k0[p], x0[p], y0[p], 0.0,
                                       0.0, e_t, e_kind, e_k, e_x, e_x, 0, 0, 0, 0.0, 0.0, 0.0,
                                       grid, table, side, coef, fx, fyi, total_bar, upto, 0.0)
    return buf, ne


@nb.njit(cache=True, nogil=True)
def frozen_window(seed, window, a, b, h, p_lo, p_hi,
                  ck, cx, cy, ct, pk, px, py, pt,
                  prev_t, prev_kind, prev_k, prev_x, prev_y, prev_off,
                  grid, table, upto, rec_lo, rec_hi, feat_kind, feat_kmax, rec_isum,
                  side, coef, fx, fyi, total_bar, cap):
    """Advance particles [p_lo, p_hi) over the window (a, b].

    ``ck..ct`` hold each particle's current anchor (last post-jump state and
    its time) and are updated in place; ``pk..pt`` hold the anchor as of the
    previous window's start, and ``prev_*``/``prev_off`` that window's events
    (per-particle CSR over all particles). Grid points
    ``rec_lo..rec_hi-1`` (inside (a, b]) get their feature sums accumulated in
    ``rec_isum``.
    """
    buf = new_buffer(cap)
    ne = 0
    F = feat_kind.size
    for p in range(p_lo, p_hi):
        key = stream_key(seed, np.uint64(p), np.uint64(window))
        start = ne
        k_before = ck[p]
        buf, ne, nk, nx_, ny, nt = _segment(
            buf, ne, p, key, a, b, ck[p], cx[p], cy[p], ct[p],
            h, prev_t, prev_kind, prev_k, prev_x, prev_y, prev_off[p], prev_off[p + 1],
            pk[p], px[p], py[p], pt[p],
            grid, table, side, coef, fx, fyi, total_bar, upto, a)
        ck[p] = nk
        cx[p] = nx_
        cy[p] = ny
        ct[p] = nt
        kk = k_before
        ptr = start
        for gi in range(rec_lo, rec_hi):
            while ptr < ne and buf[1][ptr] <= grid[gi]:
                kk, _, _ = _post(buf[2][ptr], buf[3][ptr], buf[4][ptr], buf[5][ptr])
                ptr += 1
            for f in range(F):
                rec_isum[gi, f] += _feat_int(kk, feat_kind[f], feat_kmax[f])
    return buf, ne


# -- post-processing over completed systems -------------------------------------

@nb.njit(cache=True)
def states_at(offsets, ev_t, ev_kind, ev_k, ev_x, ev_y, k0, x0, y0, s, left):
    n = k0.size
    ok = np.empty(n, np.int64)
    ox = np.empty(n)
    oy = np.empty(n)
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        if left:
            ok[i], ox[i], oy[i] = _state_left(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, s)
        else:
            ok[i], ox[i], oy[i] = _state_right(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, s)
    return ok, ox, oy


@nb.njit(cache=True)
def states_on_grid(offsets, ev_t, ev_kind, ev_k, ev_x, ev_y, k0, x0, y0, grid):
    n = k0.size
    G = grid.size
    ok = np.empty((G, n), np.int64)
    ox = np.empty((G, n))
    oy = np.empty((G, n))
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        ptr = lo
        for g in range(G):
            s = grid[g]
            while ptr < hi and ev_t[ptr] <= s:
                ptr += 1
            ok[g, i], ox[g, i], oy[g, i] = _state_from(ptr - 1, lo, ev_t, ev_kind, ev_k, ev_x, ev_y,
                                                      k0[i], x0[i], y0[i], 0.0, s)
    return ok, ox, oy


@nb.njit(cache=True)
def grid_feature_sums(offsets, ev_t, ev_kind, ev_k, k0, grid, feat_kind, feat_kmax):
    n = k0.size
    G = grid.size
    F = feat_kind.size
    out = np.zeros((G, F), np.int64)
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        ptr = lo
        k = k0[i]
        for g in range(G):
            while ptr < hi and ev_t[ptr] <= grid[g]:
                k, _, _ = _post(ev_kind[ptr], ev_k[ptr], 0.0, 0.0)
                ptr += 1
            for f in range(F):
                out[g, f] += _feat_int(k, feat_kind[f], feat_kmax[f])
    return out


@nb.njit(cache=True)
def ensemble_feature_path(order, ev_t, ev_kind, ev_k, k0, feat_kind, feat_kmax):
    """Exact right-continuous Y-feature means of the ensemble.

    Returns breakpoints (sorted event times) and values with one more row:
    the mean on [bp[j-1], bp[j]) is row j.
    """
    n = k0.size
    F = feat_kind.size
    E = order.size
    isum = np.zeros(F, np.int64)
    for i in range(n):
        for f in range(F):
            isum[f] += _feat_int(k0[i], feat_kind[f], feat_kmax[f])
    bps = np.empty(E)
    vals = np.empty((E + 1, F))
    _means_from_sums(isum, n, feat_kind, feat_kmax, vals[0])
    for j in range(E):
        e = order[j]
        k = ev_k[e]
        nk, _, _ = _post(ev_kind[e], k, 0.0, 0.0)
        for f in range(F):
            isum[f] += _feat_int(nk, feat_kind[f], feat_kmax[f]) - _feat_int(k, feat_kind[f], feat_kmax[f])
        bps[j] = ev_t[e]
        _means_from_sums(isum, n, feat_kind, feat_kmax, vals[j + 1])
    return bps, vals


# -- test functions -------------------------------------------------------------

G_CONST, G_PRODUCT, G_LINEAR_X = 0, 1, 2
PHI_ONE, PHI_EXPK, PHI_CAP, PHI_BUMP = 0, 1, 2, 3


@nb.njit(cache=True)
def _phi(code, par, k):
    if code == PHI_ONE:
        return 1.0
    if code == PHI_EXPK:
        return np.exp(-k)
    if code == PHI_CAP:
        return min(k, par) / par
    return 1.0 if k == par else 0.0


@nb.njit(cache=True)
def g_eval(gcode, gpar, k, x, y):
    """(g, dg/dx, dg/dy) for a catalog test function.

    gpar = [scale, alpha, beta, phi_code, phi_param].
    """
    scale = gpar[0]
    if gcode == G_CONST:
        return scale, 0.0, 0.0
    if gcode == G_LINEAR_X:
        return scale * x, scale, 0.0
    e = scale * _phi(int(gpar[3]), gpar[4], k) * np.exp(-gpar[1] * x - gpar[2] * y)
    return e, -gpar[1] * e, -gpar[2] * e


@nb.njit(cache=True)
def _gen_integrand(k, x, y, dk, dx, dy, m, gcode, gpar, side, coef, fx, fyi):
    lp, lm = _rates(dk, dx, dy, m, side, coef, fx, fyi)
    g0, gx, gy = g_eval(gcode, gpar, k, x, y)
    uk, ux, uy = _post(1, k, x, y)
    gu, _, _ = g_eval(gcode, gpar, uk, ux, uy)
    val = lp * (gu - g0) + gx
    if k > 0:
        wk, wx, wy = _post(-1, k, x, y)
        gw, _, _ = g_eval(gcode, gpar, wk, wx, wy)
        val += lm * (gw - g0) + gy
    return val


@nb.njit(cache=True)
def _lookup(s, left, lo, hi, ev_t, lag, bps):
    """Indices (own event, delayed event, measure row) behind the integrand at ``s``.

    A delayed index of ``lo - 2`` stands for the initial state at time 0.
    """
    if left:
        idx = _last_lt(ev_t, lo, hi, s)
    else:
        idx = _last_leq(ev_t, lo, hi, s)
    if lag > 0.0:
        u = s - lag
        if u <= 0.0:
            return idx, lo - 2, np.searchsorted(bps, 0.0, side="right")
        if left:
            return idx, _last_lt(ev_t, lo, hi, u), np.searchsorted(bps, u, side="left")
        return idx, _last_leq(ev_t, lo, hi, u), np.searchsorted(bps, u, side="right")
    if left:
        return idx, idx, np.searchsorted(bps, s, side="left")
    return idx, idx, np.searchsorted(bps, s, side="right")


@nb.njit(cache=True)
def _integrand_from(s, idx, didx, midx, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, k0, x0, y0,
                    lag, vals, gcode, gpar, side, coef, fx, fyi):
    k, x, y = _state_from(idx, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, k0, x0, y0, 0.0, s)
    if lag > 0.0:
        if didx == lo - 2:
            dk, dx, dy = k0, x0, y0
        else:
            dk, dx, dy = _state_from(didx, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, k0, x0, y0, 0.0, s - lag)
    else:
        dk, dx, dy = k, x, y
    return _gen_integrand(k, x, y, dk, dx, dy, vals[midx], gcode, gpar, side, coef, fx, fyi)


@nb.njit(cache=True)
def _merge_nodes(nodes, ev_t, lo, hi, lag, t1, t2):
    extra = hi - lo
    if lag > 0.0:
        extra *= 2
    buf = np.empty(nodes.size + extra)
    n = 0
    for j in range(nodes.size):
        buf[n] = nodes[j]
        n += 1
    for e in range(lo, hi):
        if t1 < ev_t[e] < t2:
            buf[n] = ev_t[e]
            n += 1
        if lag > 0.0 and t1 < ev_t[e] + lag < t2:
            buf[n] = ev_t[e] + lag
            n += 1
    out = np.sort(buf[:n])
    # drop duplicates
    w = 0
    for j in range(out.size):
        if w == 0 or out[j] > out[w - 1]:
            out[w] = out[j]
            w += 1
    return out[:w]


@nb.njit(cache=True)
def dynkin_batch(offsets, ev_t, ev_kind, ev_k, ev_x, ev_y, k0, x0, y0, t1, t2,
                 gcode, gpar, obs_t, obs_code, obs_par,
                 side, coef, fx, fyi, lag, bps, vals, nodes):
    """Per particle: g(X_t2) - g(X_t1), the generator integral over [t1, t2]
    (trapezoid with one-sided limits at every node) and the product of the
    observables ``phi_j(X_{obs_t[j]})``."""
    n = k0.size
    gdiff = np.empty(n)
    integ = np.empty(n)
    weight = np.ones(n)
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        k, x, y = _state_right(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, t2)
        g2, _, _ = g_eval(gcode, gpar, k, x, y)
        k, x, y = _state_right(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, t1)
        g1, _, _ = g_eval(gcode, gpar, k, x, y)
        gdiff[i] = g2 - g1
        for j in range(obs_t.size):
            k, x, y = _state_right(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, obs_t[j])
            v, _, _ = g_eval(obs_code[j], obs_par[j], k, x, y)
            weight[i] *= v
        pts = _merge_nodes(nodes, ev_t, lo, hi, lag, t1, t2)
        acc = 0.0
        ri, rd, rm = _lookup(pts[0], False, lo, hi, ev_t, lag, bps)
        fa = _integrand_from(pts[0], ri, rd, rm, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, k0[i], x0[i], y0[i],
                             lag, vals, gcode, gpar, side, coef, fx, fyi)
        for j in range(1, pts.size):
            b = pts[j]
            li, ld, lm_ = _lookup(b, True, lo, hi, ev_t, lag, bps)
            fb = _integrand_from(b, li, ld, lm_, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, k0[i], x0[i], y0[i],
                                 lag, vals, gcode, gpar, side, coef, fx, fyi)
            acc += 0.5 * (b - pts[j - 1]) * (fa + fb)
            if j + 1 < pts.size:
                ri, rd, rm = _lookup(b, False, lo, hi, ev_t, lag, bps)
                if ri == li and rd == ld and rm == lm_:
                    fa = fb
                else:
                    fa = _integrand_from(b, ri, rd, rm, lo, ev_t, ev_kind, ev_k, ev_x, ev_y, k0[i], x0[i], y0[i],
                                         lag, vals, gcode, gpar, side, coef, fx, fyi)
        integ[i] = acc
    return gdiff, integ, weight


# -- path densities -----------------------------------------------------------------

@nb.njit(cache=True)
def _total_diff(k, x, y, m1, m2, side, coef, fx, fyi):
    lp1, lm1 = _rates(k, x, y, m1, side, coef, fx, fyi)
    lp2, lm2 = _rates(k, x, y, m2, side, coef, fx, fyi)
    return (lp2 + lm2) - (lp1 + lm1)


@nb.njit(cache=True)
def log_density_batch(offsets, ev_t, ev_kind, ev_k, ev_x, ev_y, k0, x0, y0, T,
                      side, coef, fx, fyi, bps1, vals1, bps2, vals2, nodes):
    """Per particle: sum of log intensity ratios at jumps and the integral of
    the total-rate difference over [0, T]."""
    n = k0.size
    jumps = np.zeros(n)
    integ = np.empty(n)
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        for e in range(lo, hi):
            t = ev_t[e]
            m1 = vals1[np.searchsorted(bps1, t, side="right")]
            m2 = vals2[np.searchsorted(bps2, t, side="right")]
            lp1, lm1 = _rates(ev_k[e], ev_x[e], ev_y[e], m1, side, coef, fx, fyi)
            lp2, lm2 = _rates(ev_k[e], ev_x[e], ev_y[e], m2, side, coef, fx, fyi)
            if ev_kind[e] > 0:
                r1, r2 = lp1, lp2
            else:
                r1, r2 = lm1, lm2
            if r1 <= 0.0 or r2 <= 0.0:
                raise ValueError("A4 violated: density undefined")
            jumps[i] += np.log(r2) - np.log(r1)
        pts = _merge_nodes(nodes, ev_t, lo, hi, 0.0, 0.0, T)
        acc = 0.0
        k, x, y = _state_right(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, pts[0])
        fa = _total_diff(k, x, y, vals1[np.searchsorted(bps1, pts[0], side="right")],
                         vals2[np.searchsorted(bps2, pts[0], side="right")], side, coef, fx, fyi)
        for j in range(1, pts.size):
            b = pts[j]
            k, x, y = _state_left(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, b)
            fb = _total_diff(k, x, y, vals1[np.searchsorted(bps1, b, side="left")],
                             vals2[np.searchsorted(bps2, b, side="left")], side, coef, fx, fyi)
            acc += 0.5 * (b - pts[j - 1]) * (fa + fb)
            if j + 1 < pts.size:
                k, x, y = _state_right(ev_t, ev_kind, ev_k, ev_x, ev_y, lo, hi, k0[i], x0[i], y0[i], 0.0, b)
                fa = _total_diff(k, x, y, vals1[np.searchsorted(bps1, b, side="right")],
                                 vals2[np.searchsorted(bps2, b, side="right")], side, coef, fx, fyi)
        integ[i] = acc
    return jumps, integ


# -- replicated frozen segments (one-jump oracle check) ------------------------------

@nb.njit(cache=True)
def replicate_frozen(seed, reps, t, delta, k, x, y, lag, h_t, h_kind, h_k, h_x, h_y, hk, hx, hy, hist_end,
                     grid, table, side, coef, fx, fyi, total_bar):
    """Counts of (exactly one arrival, exactly one service, no jump) over
    ``reps`` independent thinning runs on (t, t + delta], with intensities
    frozen on a history valid up to ``hist_end``."""
    up = 0
    down = 0
    none = 0
    buf = new_buffer(16)
    upto = grid.size - 1
    for r in range(reps):
        key = stream_key(seed, np.uint64(r), np.uint64(WINDOW_REPLICA))
        buf, ne, _, _, _, _ = _segment(buf, 0, r, key, t, t + delta, k, x, y, t,
                                       lag, h_t, h_kind, h_k, h_x, h_y, 0, h_t.size, hk, hx, hy, 0.0,
                                       grid, table, side, coef, fx, fyi, total_bar, upto, hist_end)
        if ne == 0:
            none += 1
        elif ne == 1:
            if buf[2][0] > 0:
                up += 1
            else:
                down += 1
    return up, down, none
