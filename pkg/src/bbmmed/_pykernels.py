"""Numpy implementations of the inner loops in ``_kernels.pyx``.

Same inputs, same outputs; used when the extension is not built or when
``BBMMED_PURE_PYTHON`` is set.
"""

import numpy as np


def advance_path(x, sigma, var_dt, z, u, bridge, out):
    # cumsum adds left to right, matching the sequential loop bit for bit
    path = np.cumsum(np.concatenate(([x], sigma * np.asarray(z))))
    prev, nxt = path[:-1], path[1:]
    lo = nxt <= 0.0
    hi = nxt >= 1.0
    event = lo | hi
    hit_one = hi
    if bridge:
        inside = ~event
        with np.errstate(over="ignore", under="ignore"):
            p0 = np.exp(-2.0 * prev * nxt / var_dt)
            p1 = np.exp(-2.0 * (1.0 - prev) * (1.0 - nxt) / var_dt)
        b0 = inside & (u < p0)
        b1 = inside & ~b0 & (u < p0 + p1)
        event = event | b0 | b1
        hit_one = hi | b1
    n = len(nxt)
    if not event.any():
        out[:n] = nxt
        return n, -1
    k = int(np.argmax(event))
    bound = 1 if hit_one[k] else 0
    out[:k] = nxt[:k]
    out[k] = float(bound)
    return k + 1, bound


def zoh_runs(P, G, O0, S, stop, rec, out):
    R = O0.shape[0]
    if R == 0:
        return
    stop = np.asarray(stop)
    rec = np.asarray(rec)
    o = np.array(O0, dtype=float)
    kmax = int(stop.max())
    Pt, Gt = P.T, G.T
    rows = np.arange(R)
    ri = 0
    k = 0
    while True:
        while ri < len(rec) and rec[ri] == k:
            live = stop >= k
            out[rows[live], ri] = o[live]
            ri += 1
        if k >= kmax:
            break
        o = o @ Pt + S[:, :, k] @ Gt
        k += 1
