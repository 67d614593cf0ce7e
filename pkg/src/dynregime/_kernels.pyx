# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scoring kernels.

Same arithmetic, in the same order, as the scalar reference in
dynregime.score, so results agree bit-for-bit with it.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log10, INFINITY

cnp.import_array()


cdef inline double _score(const double[::1] s, const double[::1] ls,
                          const unsigned char[::1] mask, Py_ssize_t d,
                          double *g_out, double *o_out) noexcept nogil:
    cdef Py_ssize_t i, imax = -1
    cdef double lo = INFINITY, hi = -INFINITY, smax = -INFINITY
    cdef double g, o
    cdef bint has_rem = False
    for i in range(d):
        if mask[i]:
            if s[i] < lo:
                lo = s[i]
            if s[i] > smax:
                smax = s[i]
                imax = i
        else:
            has_rem = True
            if s[i] > hi:
                hi = s[i]
    if lo <= 0.0:
        g_out[0] = 0.0
        o_out[0] = 0.0
        return 0.0
    o = ls[imax] - log10(lo)
    if not has_rem:
        g = 1.0
    elif lo <= hi:
        g = 0.0
    elif hi == 0.0:
        g = 1.0
    else:
        g = log10(lo - hi) / log10(lo + hi)
        if not g > 0.0:
            g = 0.0
    g_out[0] = g
    o_out[0] = o
    return g / (1.0 + o)


def _normalized(terms):
    a = np.abs(np.ascontiguousarray(terms, dtype=np.float64))
    pos = np.where(a > 0.0, a, np.inf)
    scale = pos.min(axis=1)
    degenerate = ~np.isfinite(scale)
    scale[degenerate] = 1.0
    s = a / scale[:, None]
    return s, degenerate


def row_scores(terms, masks):
    """Per-row (gamma, omega, m) for a per-row mask array."""
    s_arr, degenerate = _normalized(terms)
    cdef double[:, ::1] s = s_arr
    cdef const unsigned char[:, ::1] mk = np.ascontiguousarray(masks, dtype=np.uint8)
    cdef const unsigned char[::1] deg = degenerate.view(np.uint8)
    cdef Py_ssize_t n = s.shape[0], d = s.shape[1], r, i
    g_arr = np.zeros(n)
    o_arr = np.zeros(n)
    m_arr = np.zeros(n)
    cdef double[::1] g = g_arr, o = o_arr, m = m_arr
    cdef double[::1] ls = np.empty(d)
    cdef double gv, ov
    with nogil:
        for r in range(n):
            if deg[r]:
                continue
            for i in range(d):
                ls[i] = log10(s[r, i]) if s[r, i] > 0.0 else -INFINITY
            m[r] = _score(s[r], ls, mk[r], d, &gv, &ov)
            g[r] = gv
            o[r] = ov
    return g_arr, o_arr, m_arr


def mask_objectives(terms, weights, masks):
    """Weighted sum of local scores over all rows, for each candidate mask."""
    s_arr, degenerate = _normalized(terms)
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] ls = np.empty_like(s_arr)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const unsigned char[:, ::1] mk = np.ascontiguousarray(masks, dtype=np.uint8)
    cdef const unsigned char[::1] deg = degenerate.view(np.uint8)
    cdef Py_ssize_t n = s.shape[0], d = s.shape[1], nm = mk.shape[0], r, j
    out_arr = np.zeros(nm)
    cdef double[::1] out = out_arr
    cdef double acc, gv, ov, val
    with nogil:
        for r in range(n):
            for j in range(d):
                ls[r, j] = log10(s[r, j]) if s[r, j] > 0.0 else -INFINITY
        for j in range(nm):
            acc = 0.0
            for r in range(n):
                if deg[r]:
                    continue
                val = _score(s[r], ls[r], mk[j], d, &gv, &ov)
                acc = acc + w[r] * val
            out[j] = acc
    return out_arr


cdef inline double _van_leer(double a, double b) noexcept nogil:
    cdef double prod = a * b
    if prod > 0.0:
        return 2.0 * prod / (a + b)
    return 0.0


cdef inline double _face_flux(double nl, double nr, double sl, double sr,
                              double cl, double cr, double fl, double fr,
                              double h, double D_a, double chi0, double alpha_a,
                              double rho_a, bint limited) noexcept nogil:
    # physical flux from the left cell to the right cell
    cdef double c_face = 0.5 * (cl + cr)
    cdef double u = (chi0 / (1.0 + alpha_a * c_face) * (cr - cl) + rho_a * (fr - fl)) / h
    cdef double n_face
    if not limited:
        n_face = 0.5 * (nl + nr)
    elif u >= 0.0:
        n_face = nl + 0.5 * sl
    else:
        n_face = nr - 0.5 * sr
    return -D_a * (nr - nl) / h + u * n_face


def n_flux_divergence(n_in, c_in, f_in, double h, double D_a, double chi0,
                      double alpha_a, double rho_a, bint limited=True):
    """Divergence of the cell-density flux with zero flux through the walls."""
    cdef const double[:, ::1] n = np.ascontiguousarray(n_in, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef const double[:, ::1] f = np.ascontiguousarray(f_in, dtype=np.float64)
    cdef Py_ssize_t mx = n.shape[0], my = n.shape[1], i, j
    out_arr = np.zeros((mx, my))
    sx_arr = np.zeros((mx, my))
    sy_arr = np.zeros((mx, my))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] sx = sx_arr
    cdef double[:, ::1] sy = sy_arr
    cdef double flux
    with nogil:
        if limited:
            for i in range(1, mx - 1):
                for j in range(my):
                    sx[i, j] = _van_leer(n[i, j] - n[i - 1, j], n[i + 1, j] - n[i, j])
            for i in range(mx):
                for j in range(1, my - 1):
                    sy[i, j] = _van_leer(n[i, j] - n[i, j - 1], n[i, j + 1] - n[i, j])
        for i in range(mx - 1):
            for j in range(my):
                flux = _face_flux(n[i, j], n[i + 1, j], sx[i, j], sx[i + 1, j],
                                  c[i, j], c[i + 1, j], f[i, j], f[i + 1, j],
                                  h, D_a, chi0, alpha_a, rho_a, limited)
                out[i, j] -= flux
                out[i + 1, j] += flux
        for i in range(mx):
            for j in range(my - 1):
                flux = _face_flux(n[i, j], n[i, j + 1], sy[i, j], sy[i, j + 1],
                                  c[i, j], c[i, j + 1], f[i, j], f[i, j + 1],
                                  h, D_a, chi0, alpha_a, rho_a, limited)
                out[i, j] -= flux
                out[i, j + 1] += flux
        for i in range(mx):
            for j in range(my):
                out[i, j] = out[i, j] / h
    return out_arr
