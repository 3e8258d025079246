"""Hot loops for box search, each in a numba and a pure-numpy flavour.

The public names (``max_excess_scan``, ``max_mean_scan``) dispatch to the
numba kernels unless ``CVSA_DISABLE_NUMBA=1``. Both flavours return the same
box: ties within ``tol`` go to the smaller area, then lexicographic
``(t, l, h, w)``.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, njit


@njit
def _better(area, t, l, h, w, best):
    # lexicographic compare of (area, t, l, h, w) against best[0..4]
    key = (area, t, l, h, w)
    for i in range(5):
        if key[i] < best[i]:
            return True
        if key[i] > best[i]:
            return False
    return False


# ---------------------------------------------------------------------------
# maximum-excess box: column prefix sums + 1-D Kadane per row band


def _max_excess_loops(e, tol):
    H, W = e.shape
    colpre = np.zeros((H + 1, W))
    for i in range(H):
        for j in range(W):
            colpre[i + 1, j] = colpre[i, j] + e[i, j]

    best = -np.inf
    pref = np.zeros(W + 1)
    for t in range(H):
        for b in range(t + 1, H + 1):
            run = 0.0
            lo = 0.0
            for r in range(1, W + 1):
                run += colpre[b, r - 1] - colpre[t, r - 1]
                if run - lo > best:
                    best = run - lo
                if run < lo:
                    lo = run

    # second pass: smallest-key box among those within tol of the optimum
    thresh = best - tol
    out = np.array([H * W + 1, H, W, H, W], dtype=np.int64)
    stack = np.zeros(W + 1, dtype=np.int64)
    for t in range(H):
        for b in range(t + 1, H + 1):
            h = b - t
            pref[0] = 0.0
            for r in range(1, W + 1):
                pref[r] = pref[r - 1] + colpre[b, r - 1] - colpre[t, r - 1]
            top = 0
            for r in range(1, W + 1):
                # stack holds suffix minima of pref[0..r-1]: increasing index and value
                while top > 0 and pref[stack[top - 1]] >= pref[r - 1]:
                    top -= 1
                stack[top] = r - 1
                top += 1
                x = pref[r] - thresh
                if pref[stack[0]] > x:
                    continue
                lo_i, hi_i = 0, top - 1
                while lo_i < hi_i:
                    mid = (lo_i + hi_i + 1) // 2
                    if pref[stack[mid]] <= x:
                        lo_i = mid
                    else:
                        hi_i = mid - 1
                l = stack[lo_i]
                w = r - l
                area = h * w
                if _better(area, t, l, h, w, out):
                    out[0] = area
                    out[1] = t
                    out[2] = l
                    out[3] = h
                    out[4] = w
    return out[1], out[2], out[3], out[4], best


def _max_excess_numpy(e, tol):
    H, W = e.shape
    colpre = np.vstack([np.zeros((1, W)), np.cumsum(e, axis=0)])
    upper = np.triu(np.ones((W + 1, W + 1), dtype=bool), k=1)  # l < r

    def band_sums(t):
        cols = colpre[t + 1 :] - colpre[t]  # (H - t, W): rows b = t+1..H
        pref = np.concatenate([np.zeros((cols.shape[0], 1)), np.cumsum(cols, axis=1)], axis=1)
        return pref[:, None, :] - pref[:, :, None]  # [band, l, r]

    best = -np.inf
    for t in range(H):
        d = band_sums(t)
        best = max(best, d[:, upper].max())
    thresh = best - tol
    cands = []
    for t in range(H):
        d = band_sums(t)
        hit = (d >= thresh) & upper
        bi, li, ri = np.nonzero(hit)
        if bi.size:
            h = bi + 1
            w = ri - li
            cands.append(np.stack([h * w, np.full_like(h, t), li, h, w]))
    c = np.concatenate(cands, axis=1)
    k = np.lexsort(c[::-1])[0]
    return int(c[1, k]), int(c[2, k]), int(c[3, k]), int(c[4, k]), float(best)


# ---------------------------------------------------------------------------
# maximum-mean box under a minimum-area constraint (exhaustive enumeration)


def _max_mean_loops(s, min_area, tol):
    H, W = s.shape
    P = np.zeros((H + 1, W + 1))
    for i in range(H):
        for j in range(W):
            P[i + 1, j + 1] = P[i, j + 1] + P[i + 1, j] - P[i, j] + s[i, j]
    best = -np.inf
    for h in range(1, H + 1):
        for w in range(1, W + 1):
            if h * w < min_area:
                continue
            for t in range(H - h + 1):
                for l in range(W - w + 1):
                    v = (P[t + h, l + w] - P[t, l + w] - P[t + h, l] + P[t, l]) / (h * w)
                    if v > best:
                        best = v
    thresh = best - tol
    out = np.array([H * W + 1, H, W, H, W], dtype=np.int64)
    for h in range(1, H + 1):
        for w in range(1, W + 1):
            area = h * w
            if area < min_area or area > out[0]:
                continue
            for t in range(H - h + 1):
                for l in range(W - w + 1):
                    v = (P[t + h, l + w] - P[t, l + w] - P[t + h, l] + P[t, l]) / area
                    if v >= thresh and _better(area, t, l, h, w, out):
                        out[0] = area
                        out[1] = t
                        out[2] = l
                        out[3] = h
                        out[4] = w
    return out[1], out[2], out[3], out[4], best


def _max_mean_numpy(s, min_area, tol):
    H, W = s.shape
    P = np.zeros((H + 1, W + 1))
    P[1:, 1:] = s.cumsum(0).cumsum(1)
    means = {}
    best = -np.inf
    for h in range(1, H + 1):
        for w in range(1, W + 1):
            if h * w < min_area:
                continue
            m = (P[h:, w:] - P[:-h, w:] - P[h:, :-w] + P[:-h, :-w]) / (h * w)
            means[h, w] = m
            best = max(best, m.max())
    thresh = best - tol
    cands = []
    for (h, w), m in means.items():
        ti, li = np.nonzero(m >= thresh)
        if ti.size:
            cands.append(np.stack([np.full_like(ti, h * w), ti, li, np.full_like(ti, h), np.full_like(ti, w)]))
    c = np.concatenate(cands, axis=1)
    k = np.lexsort(c[::-1])[0]
    return int(c[1, k]), int(c[2, k]), int(c[3, k]), int(c[4, k]), float(best)


max_excess_numba = njit(_max_excess_loops)
max_mean_numba = njit(_max_mean_loops)
max_excess_numpy = _max_excess_numpy
max_mean_numpy = _max_mean_numpy

if NUMBA_ENABLED:
    max_excess_scan = max_excess_numba
    max_mean_scan = max_mean_numba
else:
    max_excess_scan = max_excess_numpy
    max_mean_scan = max_mean_numpy
