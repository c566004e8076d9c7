"""Compiled per-pixel kernels.

Every path that produces a descriptor code (code planes, the naive
classifier, the public single-pixel helpers) goes through the same jitted
functions here, so the arithmetic is bit-identical between them.
"""

import math

import numpy as np
from numba import njit

LBP, LBPRIU, VAR, WLD = 0, 1, 2, 3

HALF_PI = math.pi / 2.0
TWO_PI = 2.0 * math.pi
BC_FLOOR = 1e-12

_jit = njit(cache=True, nogil=True)
_inline = njit(cache=True, nogil=True, inline="always")


# ---------------------------------------------------------------------------
# sampling and single-pixel codes
# ---------------------------------------------------------------------------


@_inline
def sample_diffs(img, y, x, offs, wts, i, start, n, out):
    """Centre-relative values of samples start..start+n-1 of part ``i``.

    ``offs[i, q]`` is the (dy, dx) of the top-left pixel of sample q and
    ``wts[i, q]`` its bilinear weights; samples lying exactly on a pixel carry
    weights (1, 0, 0, 0) and are read directly.
    """
    c = img[y, x]
    for p in range(n):
        q = start + p
        yy = y + offs[i, q, 0]
        xx = x + offs[i, q, 1]
        w0 = wts[i, q, 0]
        if w0 == 1.0:
            out[p] = img[yy, xx] - c
            continue
        v = w0 * (img[yy, xx] - c)
        if wts[i, q, 1] != 0.0:
            v += wts[i, q, 1] * (img[yy, xx + 1] - c)
        if wts[i, q, 2] != 0.0:
            v += wts[i, q, 2] * (img[yy + 1, xx] - c)
        if wts[i, q, 3] != 0.0:
            v += wts[i, q, 3] * (img[yy + 1, xx + 1] - c)
        out[p] = v


@_inline
def lbp_from_diffs(d, P):
    code = 0
    for p in range(P):
        if d[p] >= 0.0:
            code |= 1 << p
    return code


@_inline
def uniformity_from_diffs(d, P):
    u = 0
    prev = d[P - 1] >= 0.0
    for p in range(P):
        cur = d[p] >= 0.0
        if cur != prev:
            u += 1
        prev = cur
    return u


@_inline
def riu2_from_diffs(d, P):
    if uniformity_from_diffs(d, P) > 2:
        return P + 1
    n = 0
    for p in range(P):
        if d[p] >= 0.0:
            n += 1
    return n


@_inline
def var_from_diffs(d, P):
    s = 0.0
    for p in range(P):
        s += d[p]
    mean = s / P
    acc = 0.0
    for p in range(P):
        e = d[p] - mean
        acc += e * e
    return acc / P


@_inline
def excitation_from_diffs(d, P, center):
    s = 0.0
    for p in range(P):
        s += d[p]
    return math.atan(s / max(center, 1.0))


@_inline
def orientation_angle(east, south, west, north):
    """Gradient direction in [0, 2*pi); a zero gradient gives 0."""
    gy = south - north
    gx = east - west
    if gx == 0.0 and gy == 0.0:
        return 0.0
    theta = math.atan2(gy, gx)
    if theta < 0.0:
        theta += TWO_PI
    return theta


@_inline
def orientation_bin(east, south, west, north, T):
    theta = orientation_angle(east, south, west, north)
    t = int(math.floor(theta * T / TWO_PI + 0.5))
    return t % T


@_inline
def wld_bin(xi, t, T, M, S):
    u = (xi + HALF_PI) * M / math.pi
    m = int(math.floor(u))
    if m < 0:
        m = 0
    elif m > M - 1:
        m = M - 1
    s = int(math.floor((u - m) * S))
    if s < 0:
        s = 0
    elif s > S - 1:
        s = S - 1
    return m * (T * S) + t * S + s


@_inline
def quantize(v, bounds, i, nb):
    # number of boundaries <= v in row i
    lo = 0
    hi = nb
    while lo < hi:
        mid = (lo + hi) >> 1
        if bounds[i, mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# planes
# ---------------------------------------------------------------------------


@_jit
def code_plane_rows(img, i, y0, y1, border, comps, Ps, offs, wts, bounds, nbounds,
                    T, M, S, out):
    H, W = img.shape
    d = np.empty(offs.shape[1])
    card = offs.shape[1] - 4
    comp = comps[i]
    P = Ps[i]
    nb = nbounds[i]
    for y in range(y0, y1):
        if y < border or y >= H - border:
            continue
        for x in range(border, W - border):
            # the dispatch is written out here and in classify_naive_rows: as
            # a shared helper it ran three to four times slower
            sample_diffs(img, y, x, offs, wts, i, 0, P, d)
            if comp == LBP:
                code = lbp_from_diffs(d, P)
            elif comp == LBPRIU:
                code = riu2_from_diffs(d, P)
            elif comp == VAR:
                code = quantize(var_from_diffs(d, P), bounds, i, nb)
            else:
                xi = excitation_from_diffs(d, P, img[y, x])
                sample_diffs(img, y, x, offs, wts, i, card, 4, d)
                t = orientation_bin(d[0], d[1], d[2], d[3], T)
                code = wld_bin(xi, t, T, M, S)
            out[y, x] = code


@_jit
def var_plane_rows(img, y0, y1, border, offs, wts, P, out):
    H, W = img.shape
    d = np.empty(P)
    for y in range(y0, y1):
        if y < border or y >= H - border:
            continue
        for x in range(border, W - border):
            sample_diffs(img, y, x, offs, wts, 0, 0, P, d)
            out[y, x] = var_from_diffs(d, P)


# ---------------------------------------------------------------------------
# Bhattacharyya
# ---------------------------------------------------------------------------


@_jit
def distance_from_coef(coef):
    return -math.log(max(coef, BC_FLOOR))


@_jit
def bc_sparse(ia, wa, ib, wb):
    """Coefficient over the common support, accumulated in ascending bin order."""
    coef = 0.0
    p = 0
    q = 0
    while p < ia.size and q < ib.size:
        if ia[p] == ib[q]:
            coef += math.sqrt(wa[p] * wb[q])
            p += 1
            q += 1
        elif ia[p] < ib[q]:
            p += 1
        else:
            q += 1
    return coef


@_jit
def lookup(support, g):
    """Position of global bin g in the sorted support, or support.size."""
    n = support.size
    lo = 0
    hi = n
    while lo < hi:
        mid = (lo + hi) >> 1
        if support[mid] < g:
            lo = mid + 1
        else:
            hi = mid
    if lo < n and support[lo] == g:
        return lo
    return n


@_jit
def exact_coefs(counts, ntot, models, out):
    K, S = models.shape
    for k in range(K):
        coef = 0.0
        for j in range(S):
            c = counts[j]
            if c > 0:
                coef += math.sqrt((c / ntot) * models[k, j])
        out[k] = coef


@_jit
def argmin_distance(coefs):
    best = 0
    bd = distance_from_coef(coefs[0])
    for k in range(1, coefs.size):
        dk = distance_from_coef(coefs[k])
        if dk < bd:
            bd = dk
            best = k
    return best


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@_jit
def classify_naive_rows(img, y0, y1, xlo, xhi, lo, hi, support, slot_map, offsets, models,
                        comps, Ps, offs, wts, bounds, nbounds, T, M, S, out):
    """Rebuild every window histogram from pixels.

    ``slot_map`` maps a global bin straight to its support slot; when it is
    empty (descriptors with very many bins) the support is binary-searched.
    """
    K, nsup = models.shape
    nparts = comps.size
    win = lo + hi + 1
    ntot = float(nparts * win * win)
    counts = np.zeros(nsup + 1, np.int64)
    coefs = np.empty(K)
    d = np.empty(offs.shape[1])
    card = offs.shape[1] - 4
    for y in range(y0, y1):
        for x in range(xlo, xhi):
            counts[:] = 0
            for i in range(nparts):
                comp = comps[i]
                P = Ps[i]
                nb = nbounds[i]
                off = offsets[i]
                for wy in range(y - lo, y + hi + 1):
                    for wx in range(x - lo, x + hi + 1):
                        sample_diffs(img, wy, wx, offs, wts, i, 0, P, d)
                        if comp == LBP:
                            code = lbp_from_diffs(d, P)
                        elif comp == LBPRIU:
                            code = riu2_from_diffs(d, P)
                        elif comp == VAR:
                            code = quantize(var_from_diffs(d, P), bounds, i, nb)
                        else:
                            xi = excitation_from_diffs(d, P, img[wy, wx])
                            sample_diffs(img, wy, wx, offs, wts, i, card, 4, d)
                            t = orientation_bin(d[0], d[1], d[2], d[3], T)
                            code = wld_bin(xi, t, T, M, S)
                        if slot_map.size:
                            counts[slot_map[off + code]] += 1
                        else:
                            counts[lookup(support, off + code)] += 1
            exact_coefs(counts, ntot, models, coefs)
            out[y, x] = argmin_distance(coefs) + 1


@_jit
def classify_fast_rows(cplanes, y0, y1, xlo, xhi, lo, hi, models, sqm, out):
    """Sliding-window classification over rows [y0, y1).

    The window histogram and the per-class Bhattacharyya coefficients are
    updated incrementally along each row. A decision is taken from the running
    coefficients only when the leader is separated from the runner-up by more
    than the accumulated rounding bound; otherwise the coefficients are
    recomputed exactly as the naive path does.
    """
    K, nsup = models.shape
    nparts = cplanes.shape[0]
    win = lo + hi + 1
    ntot_i = nparts * win * win
    ntot = float(ntot_i)
    sq = np.empty(ntot_i + 1)
    for c in range(ntot_i + 1):
        sq[c] = math.sqrt(c / ntot)
    counts = np.zeros(nsup + 1, np.int64)
    coefs = np.empty(K)
    for y in range(y0, y1):
        counts[:] = 0
        for i in range(nparts):
            for wy in range(y - lo, y + hi + 1):
                for wx in range(xlo - lo, xlo + hi + 1):
                    counts[cplanes[i, wy, wx]] += 1
        exact_coefs(counts, ntot, models, coefs)
        ops = 0
        for x in range(xlo, xhi):
            if x > xlo:
                xo = x - lo - 1
                xn = x + hi
                for i in range(nparts):
                    for wy in range(y - lo, y + hi + 1):
                        j = cplanes[i, wy, xo]
                        old = counts[j]
                        counts[j] = old - 1
                        if j < nsup:
                            dq = sq[old - 1] - sq[old]
                            for k in range(K):
                                coefs[k] += sqm[k, j] * dq
                            ops += 1
                        j = cplanes[i, wy, xn]
                        old = counts[j]
                        counts[j] = old + 1
                        if j < nsup:
                            dq = sq[old + 1] - sq[old]
                            for k in range(K):
                                coefs[k] += sqm[k, j] * dq
                            ops += 1
            if K == 1:
                out[y, x] = 1
                continue
            best = 0
            for k in range(1, K):
                if coefs[k] > coefs[best]:
                    best = k
            second = -1.0
            for k in range(K):
                if k != best and coefs[k] > second:
                    second = coefs[k]
            err = 2e-15 * (ops + nsup) + 1e-13
            low = coefs[best] - err
            if low > BC_FLOOR * (1.0 + 1e-9) and low > (second + err) * (1.0 + 1e-9):
                out[y, x] = best + 1
            else:
                exact_coefs(counts, ntot, models, coefs)
                ops = 0
                out[y, x] = argmin_distance(coefs) + 1


# ---------------------------------------------------------------------------
# GLCM
# ---------------------------------------------------------------------------

N_GLCM_STATS = 8


@_jit
def glcm_stats_from_keys(keys, n, G, out):
    """Haralick statistics of a symmetric GLCM given its 2n sorted pair keys."""
    total = float(n)
    mu = 0.0
    for r in range(n):
        mu += keys[r] // G
    mu /= total
    var = 0.0
    for r in range(n):
        e = keys[r] // G - mu
        var += e * e
    var /= total
    ent = 0.0
    energy = 0.0
    homog = 0.0
    dissim = 0.0
    shade = 0.0
    corr = 0.0
    contrast = 0.0
    r = 0
    while r < n:
        s = r
        while r < n and keys[r] == keys[s]:
            r += 1
        p = (r - s) / total
        a = keys[s] // G
        b = keys[s] % G
        diff = a - b
        ent -= p * math.log(p)
        energy += p * p
        homog += p / (1.0 + diff * diff)
        dissim += p * abs(diff)
        c3 = a + b - 2.0 * mu
        shade += p * c3 * c3 * c3
        corr += p * (a - mu) * (b - mu)
        contrast += p * diff * diff
    out[0] = ent
    out[1] = energy
    out[2] = homog
    out[3] = dissim
    out[4] = var
    out[5] = shade
    out[6] = corr / var if var > 0.0 else 0.0
    out[7] = contrast


@_jit
def glcm_feature_rows(q, y0, y1, half, G, dists, stats_idx, out):
    """Angle-averaged GLCM features for every pixel whose window fits."""
    H, W = q.shape
    nd = dists.size
    ns = stats_idx.size
    win = 2 * half + 1
    keys = np.empty(2 * win * win, np.int64)
    st = np.empty(N_GLCM_STATS)
    acc = np.empty(N_GLCM_STATS)
    # 0, 45, 90, 135 degrees as (dx, dy) unit steps, y pointing down
    ax = np.array([1, 1, 0, -1])
    ay = np.array([0, -1, -1, -1])
    for y in range(y0, y1):
        if y < half or y >= H - half:
            continue
        for x in range(half, W - half):
            for di in range(nd):
                dist = dists[di]
                acc[:] = 0.0
                for a in range(4):
                    ox = ax[a] * dist
                    oy = ay[a] * dist
                    n = 0
                    for yy in range(y - half, y + half + 1):
                        y2 = yy + oy
                        if y2 < y - half or y2 > y + half:
                            continue
                        for xx in range(x - half, x + half + 1):
                            x2 = xx + ox
                            if x2 < x - half or x2 > x + half:
                                continue
                            u = q[yy, xx]
                            v = q[y2, x2]
                            keys[n] = u * G + v
                            keys[n + 1] = v * G + u
                            n += 2
                    ks = np.sort(keys[:n])
                    glcm_stats_from_keys(ks, n, G, st)
                    for s in range(N_GLCM_STATS):
                        acc[s] += st[s]
                for s in range(ns):
                    out[y, x, di * ns + s] = acc[stats_idx[s]] / 4.0


@_jit
def nearest_mean_rows(feats, valid, y0, y1, mean, std, centers, out):
    H, W, D = feats.shape
    K = centers.shape[0]
    z = np.empty(D)
    for y in range(y0, y1):
        for x in range(W):
            if not valid[y, x]:
                continue
            for t in range(D):
                z[t] = (feats[y, x, t] - mean[t]) / std[t]
            best = 0
            bd = np.inf
            for k in range(K):
                s = 0.0
                for t in range(D):
                    e = z[t] - centers[k, t]
                    s += e * e
                if s < bd:
                    bd = s
                    best = k
            out[y, x] = best + 1
