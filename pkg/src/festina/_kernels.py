"""numba hot loops for the 3D shell-rate engine and the KMC sampler."""
from __future__ import annotations

import numpy as np
from numba import njit

OTHER = np.array([[1, 2], [0, 2], [0, 1]], dtype=np.int64)


@njit(cache=True, fastmath=True, error_model="numpy")
def _conv_trunc(a, b, out, n):
    for s in range(n):
        acc = 0.0 * a[0]
        for j in range(s + 1):
            acc += a[j] * b[s - j]
        out[s] = acc


@njit(cache=True, fastmath=True, error_model="numpy")
def width_tables(levels, n_shells, xmax, fx, fy, fz, w, pair_id, p3, nu, wlm):
    """R[m, d, x] = 1 - w_lm + sum_S nu_S P_l(S) for laser-coupled l."""
    n_lev = levels.shape[0]
    R = np.full((n_lev, 3, xmax), np.nan)
    for m in range(n_lev):
        sm = levels[m, 0] + levels[m, 1] + levels[m, 2]
        for d in range(3):
            a = OTHER[d, 0]
            b = OTHER[d, 1]
            pid = pair_id[levels[m, a], levels[m, b]]
            top = xmax - (sm - levels[m, d])
            for x in range(top):
                acc = 0.0
                for s in range(n_shells):
                    acc += nu[s] * p3[d, pid, x, s]
                R[m, d, x] = 1.0 - wlm[m, d, x] + acc
    return R


@njit(cache=True, fastmath=True, error_model="numpy")
def self_overlap(levels, xmax, fx, fy, fz, w):
    """w_lm = <|eta_lm(k)|^2> over emission directions, l laser-coupled to m."""
    n_lev = levels.shape[0]
    nd = w.shape[0]
    out = np.zeros((n_lev, 3, xmax))
    fs = (fx, fy, fz)
    for m in range(n_lev):
        sm = levels[m, 0] + levels[m, 1] + levels[m, 2]
        for d in range(3):
            a = OTHER[d, 0]
            b = OTHER[d, 1]
            top = xmax - (sm - levels[m, d])
            for k in range(nd):
                fa = fs[a][k, levels[m, a], levels[m, a]]
                fb = fs[b][k, levels[m, b], levels[m, b]]
                base = w[k] * (fa.real ** 2 + fa.imag ** 2) * (fb.real ** 2 + fb.imag ** 2)
                for x in range(top):
                    f = fs[d][k, x, levels[m, d]]
                    out[m, d, x] += base * (f.real ** 2 + f.imag ** 2)
    return out


@njit(cache=True, fastmath=True, error_model="numpy")
def shell_fold(levels, n_shells, g0, g1, g2, fx, fy, fz, w, hpair, pair_id, active):
    """Fold per-axis emission amplitudes into destination-shell strengths.

    For source level m (rows of ``levels``) and direction k the amplitude onto
    ground level n is sum_d g_d(n_d) prod_{a != d} h_a(n_a), with g_d the
    projected excited packet along axis d (``g0..g2[i, k, n]``) and h_a the
    bare factor conj(f_a[k, m_a, n_a]). |amplitude|^2 summed over a shell is a
    truncated convolution; ``hpair[d, k, pair, S]`` holds the precomputed
    convolution of |h_a|^2 and |h_b|^2 for the two axes other than d.
    Returns Q[i, S] and the n == m term.
    """
    nd = w.shape[0]
    ns = n_shells
    n_src = levels.shape[0]
    Q = np.zeros((n_src, ns))
    selfq = np.zeros(n_src)
    fs = (fx, fy, fz)
    gs = (g0, g1, g2)
    h = np.zeros((3, ns), dtype=np.complex128)
    hh = np.zeros((3, ns))
    gg = np.zeros(ns)
    acc_s = np.zeros(ns)
    u = np.zeros(ns, dtype=np.complex128)
    v = np.zeros(ns, dtype=np.complex128)
    ct1 = np.zeros(ns, dtype=np.complex128)
    for i in range(n_src):
        m0 = levels[i, 0]
        m1 = levels[i, 1]
        m2 = levels[i, 2]
        for k in range(nd):
            for a in range(3):
                ma = levels[i, a]
                for n in range(ns):
                    h[a, n] = fs[a][k, ma, n]
                    hh[a, n] = h[a, n].real ** 2 + h[a, n].imag ** 2
            for s in range(ns):
                acc_s[s] = 0.0
            for d in range(3):
                if not active[d]:
                    continue
                pid = pair_id[levels[i, OTHER[d, 0]], levels[i, OTHER[d, 1]]]
                gd = gs[d]
                for n in range(ns):
                    gg[n] = gd[i, k, n].real ** 2 + gd[i, k, n].imag ** 2
                for s in range(ns):
                    acc = 0.0
                    for j in range(s + 1):
                        acc += gg[j] * hpair[d, k, pid, s - j]
                    acc_s[s] += acc
            for d in range(3):
                for e in range(d + 1, 3):
                    if not (active[d] and active[e]):
                        continue
                    f = 3 - d - e
                    gd = gs[d]
                    ge = gs[e]
                    for n in range(ns):
                        u[n] = gd[i, k, n] * np.conj(h[d, n])
                        v[n] = h[e, n] * np.conj(ge[i, k, n])
                    _conv_trunc(u, v, ct1, ns)
                    for s in range(ns):
                        acc = 0.0j
                        for j in range(s + 1):
                            acc += ct1[j] * hh[f, s - j]
                        acc_s[s] += 2.0 * acc.real
            for s in range(ns):
                Q[i, s] += w[k] * acc_s[s]
            am = (g0[i, k, m0] * h[1, m1] * h[2, m2]
                  + h[0, m0] * g1[i, k, m1] * h[2, m2]
                  + h[0, m0] * h[1, m1] * g2[i, k, m2])
            selfq[i] += w[k] * (am.real ** 2 + am.imag ** 2)
    return Q, selfq


def channel_index(chans, n_shells):
    """Gather indices for kmc_advance: the second source / destination slot
    points into the shifted half of the factor tables when both atoms share
    a shell."""
    ci = np.array(chans, dtype=np.int64).reshape(-1, 4).copy()
    ci[:, 1] += n_shells * (ci[:, 0] == ci[:, 1])
    ci[:, 3] += n_shells * (ci[:, 2] == ci[:, 3])
    return ci


@njit(cache=True, nogil=True)
def kmc_advance(counts, g, t, t_end, amp, laser_on, chans, ci, cw, uni, pos):
    """Gillespie steps on shell counts from t until t_end.

    Laser moves M -> S happen at amp[S, M] (N_S/g_S + 1) N_M; collision
    channel c at cw[c] N_M (N_N - d)/(g_M g_N) (g_P + N_P)(g_Q + N_Q + d)/(g_P g_Q).
    ``ci`` comes from channel_index. Random numbers are read from ``uni``
    starting at ``pos``. Returns (t, pos, events, status) with status
    0 = reached t_end, 1 = random buffer exhausted, 2 = non-finite rate.
    """
    ns = counts.shape[0]
    nc = chans.shape[0]
    nl = ns * ns if laser_on else 0
    cum = np.empty(nl + nc)
    src = np.empty(2 * ns)
    dst = np.empty(2 * ns)
    events = 0
    while True:
        if pos + 2 > uni.shape[0]:
            return t, pos, events, 1
        for s in range(ns):
            src[s] = counts[s] / g[s]
            src[ns + s] = max(counts[s] - 1, 0) / g[s]
            dst[s] = (g[s] + counts[s]) / g[s]
            dst[ns + s] = (g[s] + counts[s] + 1) / g[s]
        tot = 0.0
        if laser_on:
            for m in range(ns):
                nm = counts[m]
                for s in range(ns):
                    tot += amp[s, m] * dst[s] * nm
                    cum[m * ns + s] = tot
        for c in range(nc):
            tot += cw[c] * src[ci[c, 0]] * src[ci[c, 1]] * dst[ci[c, 2]] * dst[ci[c, 3]]
            cum[nl + c] = tot
        if not np.isfinite(tot):
            return t, pos, events, 2
        if tot <= 0.0:
            return t_end, pos, events, 0
        dt = -np.log(1.0 - uni[pos]) / tot
        pos += 1
        if t + dt >= t_end:
            return t_end, pos, events, 0
        t += dt
        target = uni[pos] * tot
        pos += 1
        lo = 0
        hi = nl + nc - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cum[mid] > target:
                hi = mid
            else:
                lo = mid + 1
        if lo < nl:
            m = lo // ns
            s = lo % ns
            counts[m] -= 1
            counts[s] += 1
        else:
            c = lo - nl
            counts[chans[c, 0]] -= 1
            counts[chans[c, 1]] -= 1
            counts[chans[c, 2]] += 1
            counts[chans[c, 3]] += 1
        events += 1
