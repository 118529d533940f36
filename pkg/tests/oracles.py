"""Independent reference implementations used as test oracles.

Everything here is deliberately written the dumb, direct way (python
loops, exhaustive enumeration, textbook formulas) and shares no code
with the package.
"""
import heapq
import itertools

import numpy as np


def energy_oracle(y, p, x, fg, bg, lam, sigma, neighborhood=4):
    """Direct term-by-term energy: -log prob unaries (0 on respected
    scribbles, inf on violated ones) plus contrast-weighted Potts."""
    h, w = p.shape
    for (sx, sy) in fg:
        if y[sy, sx] != 1:
            return float("inf")
    for (sx, sy) in bg:
        if y[sy, sx] != 0:
            return float("inf")
    scribbled = set(fg) | set(bg)
    pc = np.clip(p, 1e-7, 1 - 1e-7)
    total = 0.0
    for yy in range(h):
        for xx in range(w):
            if (xx, yy) in scribbled:
                continue
            total += -np.log(pc[yy, xx]) if y[yy, xx] == 1 else -np.log(1.0 - pc[yy, xx])
    offsets = [(0, 1, 1.0), (1, 0, 1.0)]
    if neighborhood == 8:
        offsets += [(1, 1, np.sqrt(2.0)), (1, -1, np.sqrt(2.0))]
    for yy in range(h):
        for xx in range(w):
            for dy, dx, d in offsets:
                ny, nx = yy + dy, xx + dx
                if 0 <= ny < h and 0 <= nx < w and y[yy, xx] != y[ny, nx]:
                    diff = float(x[yy, xx]) - float(x[ny, nx])
                    total += lam * np.exp(-diff * diff / (2.0 * sigma ** 2)) / d
    return total


def brute_force_minimum(p, x, fg, bg, lam, sigma, neighborhood=4):
    """Minimum energy over all 2^(h*w) labelings."""
    h, w = p.shape
    best = float("inf")
    for bits in itertools.product((0, 1), repeat=h * w):
        y = np.array(bits, dtype=np.uint8).reshape(h, w)
        e = energy_oracle(y, p, x, fg, bg, lam, sigma, neighborhood)
        if e < best:
            best = e
    return best


def enumerate_energies(p, x, fg, bg, lam, sigma, neighborhood=4):
    """Energy of every one of the 2^(h*w) labelings at once (vectorized
    enumeration, independent of the min-cut machinery).

    Returns (energies, infeasible_mask, row_index_fn) where row_index_fn
    maps a labeling array to its row.
    """
    h, w = p.shape
    n = h * w
    m = 2 ** n
    codes = np.arange(m, dtype=np.uint64)
    bits = ((codes[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & 1).astype(np.float64)

    pc = np.clip(np.asarray(p, dtype=np.float64).ravel(), 1e-7, 1 - 1e-7)
    cost1 = -np.log(pc)
    cost0 = -np.log(1.0 - pc)
    scribbled = np.zeros(n, dtype=bool)
    for (sx, sy) in set(fg) | set(bg):
        scribbled[sy * w + sx] = True
    cost1[scribbled] = 0.0
    cost0[scribbled] = 0.0
    energies = bits @ cost1 + (1.0 - bits) @ cost0

    offsets = [(0, 1, 1.0), (1, 0, 1.0)]
    if neighborhood == 8:
        offsets += [(1, 1, np.sqrt(2.0)), (1, -1, np.sqrt(2.0))]
    xr = np.asarray(x, dtype=np.float64)
    for yy in range(h):
        for xx in range(w):
            for dy, dx, d in offsets:
                ny, nx = yy + dy, xx + dx
                if 0 <= ny < h and 0 <= nx < w:
                    diff = xr[yy, xx] - xr[ny, nx]
                    wgt = lam * np.exp(-diff * diff / (2.0 * sigma ** 2)) / d
                    i, j = yy * w + xx, ny * w + nx
                    energies += wgt * (bits[:, i] != bits[:, j])

    infeasible = np.zeros(m, dtype=bool)
    for (sx, sy) in fg:
        infeasible |= bits[:, sy * w + sx] == 0
    for (sx, sy) in bg:
        infeasible |= bits[:, sy * w + sx] == 1

    def row_index(labels):
        flat = np.asarray(labels).ravel().astype(np.uint64)
        return int((flat << np.arange(n, dtype=np.uint64)).sum())

    return energies, infeasible, row_index


def dijkstra_oracle(img, seeds, gamma=1.0):
    """Plain heapq Dijkstra on the explicit 8-connected grid graph with
    intensities min-max rescaled to [0, 1]."""
    h, w = img.shape
    a = np.asarray(img, dtype=np.float64)
    lo, hi = a.min(), a.max()
    a = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
    dist = np.full((h, w), np.inf)
    pq = []
    for (x, y) in seeds:
        dist[y, x] = 0.0
        heapq.heappush(pq, (0.0, y, x))
    while pq:
        d, y, x = heapq.heappop(pq)
        if d > dist[y, x]:
            continue
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w:
                    dd = a[ny, nx] - a[y, x]
                    nd = d + np.sqrt(float(abs(dy) + abs(dx)) + (gamma * dd) ** 2)
                    if nd < dist[ny, nx]:
                        dist[ny, nx] = nd
                        heapq.heappush(pq, (nd, ny, nx))
    return dist


def chamfer_oracle(shape, seeds):
    """Closed-form 8-connected chamfer distance on a constant image."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    best = np.full((h, w), np.inf)
    for (sx, sy) in seeds:
        adx = np.abs(xx - sx)
        ady = np.abs(yy - sy)
        mn = np.minimum(adx, ady)
        mx = np.maximum(adx, ady)
        best = np.minimum(best, (mx - mn) + mn * np.sqrt(2.0))
    return best


def direct_conv2d(x, weight, bias, dilation):
    """Nested-loop zero-padded convolution; x (c_in, h, w)."""
    c_out, c_in, k, _ = weight.shape
    _, h, w = x.shape
    half = k // 2
    out = np.zeros((c_out, h, w), dtype=np.float64)
    for co in range(c_out):
        for yy in range(h):
            for xx in range(w):
                acc = float(bias[co])
                for ci in range(c_in):
                    for ky in range(k):
                        for kx in range(k):
                            sy = yy + (ky - half) * dilation
                            sx = xx + (kx - half) * dilation
                            if 0 <= sy < h and 0 <= sx < w:
                                acc += float(weight[co, ci, ky, kx]) * float(x[ci, sy, sx])
                out[co, yy, xx] = acc
    return out


def fd_head_gradient(loss_fn, head, eps=1e-6):
    """Central finite differences of loss_fn() w.r.t. head weight and bias."""
    grads = []
    for arr in (head.weight, head.bias):
        g = np.zeros_like(arr, dtype=np.float64)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + eps
            lp = loss_fn()
            arr[i] = orig - eps
            lm = loss_fn()
            arr[i] = orig
            g[i] = (lp - lm) / (2.0 * eps)
        grads.append(g)
    return grads[0], grads[1]


def max_rel_err(a, b, floor=1e-10):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    out = 0.0
    for x, y in zip(a, b):
        if abs(x) > floor or abs(y) > floor:
            out = max(out, abs(x - y) / max(abs(x), abs(y)))
    return out
