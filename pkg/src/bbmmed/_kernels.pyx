# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics are mirrored exactly by ``_pykernels``."""

from libc.math cimport exp


def advance_path(double x, double sigma, double var_dt,
                 const double[::1] z, const double[::1] u, bint bridge,
                 double[::1] out):
    """Advance one absorbed-Brownian path through ``len(z)`` steps.

    ``out[k]`` receives the value after step ``k``.  Stops at the first
    absorption (value at or beyond a bound, or a bridge crossing when
    ``bridge`` is set).  Returns ``(n_written, bound)``, with ``bound = -1``
    if the path survives the whole chunk.
    """
    cdef Py_ssize_t k, n = z.shape[0]
    cdef Py_ssize_t written = n
    cdef int bound = -1
    cdef double xn, p0, p1
    with nogil:
        for k in range(n):
            xn = x + sigma * z[k]
            if xn <= 0.0:
                bound = 0
            elif xn >= 1.0:
                bound = 1
            elif bridge:
                p0 = exp(-2.0 * x * xn / var_dt)
                p1 = exp(-2.0 * (1.0 - x) * (1.0 - xn) / var_dt)
                if u[k] < p0:
                    bound = 0
                elif u[k] < p0 + p1:
                    bound = 1
            if bound >= 0:
                out[k] = <double>bound
                written = k + 1
                break
            out[k] = xn
            x = xn
    return written, bound


def zoh_runs(const double[:, ::1] P, const double[:, ::1] G,
             const double[:, ::1] O0, const double[:, :, ::1] S,
             const long long[::1] stop, const long long[::1] rec,
             double[:, :, ::1] out):
    """Zero-order-hold stepping ``o <- P o + G s_k`` for a block of runs.

    Run ``r`` is advanced for ``stop[r]`` steps using inputs ``S[r, :, k]``;
    its state at every record step ``rec[i] <= stop[r]`` goes to ``out[r, i]``.
    """
    cdef Py_ssize_t R = O0.shape[0], N = O0.shape[1], M = G.shape[1]
    cdef Py_ssize_t nrec = rec.shape[0]
    cdef Py_ssize_t r, k, i, j, m, ri
    cdef long long kstop
    cdef double acc
    cdef double[::1] o = O0[0].copy() if R > 0 else None
    cdef double[::1] tmp = O0[0].copy() if R > 0 else None
    with nogil:
        for r in range(R):
            for i in range(N):
                o[i] = O0[r, i]
            kstop = stop[r]
            ri = 0
            k = 0
            while True:
                while ri < nrec and rec[ri] == k:
                    for i in range(N):
                        out[r, ri, i] = o[i]
                    ri += 1
                if k >= kstop:
                    break
                for i in range(N):
                    acc = 0.0
                    for j in range(N):
                        acc = acc + P[i, j] * o[j]
                    for m in range(M):
                        acc = acc + G[i, m] * S[r, m, k]
                    tmp[i] = acc
                for i in range(N):
                    o[i] = tmp[i]
                k += 1
