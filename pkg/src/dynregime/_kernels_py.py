"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

``row_scores`` takes its logarithms from ``math.log10`` (libm) so per-row
scores match the scalar reference exactly; numpy's vectorised log10 can be off
by an ulp. ``mask_objectives`` only ranks masks and keeps the fast numpy log.
"""

import math

import numpy as np


def _libm_log10(x):
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    out = np.fromiter(
        (math.log10(v) if v > 0.0 else -math.inf for v in flat.tolist()),
        dtype=np.float64,
        count=flat.size,
    )
    return out.reshape(x.shape)


def _normalized(terms):
    a = np.abs(np.ascontiguousarray(terms, dtype=np.float64))
    pos = np.where(a > 0.0, a, np.inf)
    scale = pos.min(axis=1)
    degenerate = ~np.isfinite(scale)
    scale[degenerate] = 1.0
    return a / scale[:, None], degenerate


def _scores(s, sel, log10=np.log10):
    """Vectorised local scores; ``sel`` broadcasts against ``s``."""
    sel = np.broadcast_to(sel, s.shape)
    lo = np.where(sel, s, np.inf).min(axis=1)
    smax = np.where(sel, s, -np.inf).max(axis=1)
    hi = np.where(sel, -np.inf, s).max(axis=1)
    has_rem = ~sel.all(axis=1)
    valid = lo > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        o = np.where(valid, log10(smax) - log10(lo), 0.0)
        active = valid & has_rem & (lo > hi) & (hi != 0.0)
        raw = log10(np.where(active, lo - hi, 2.0)) / log10(np.where(active, lo + hi, 10.0))
    g = np.where(active, np.maximum(raw, 0.0), 0.0)
    g = np.where(valid & (~has_rem | ((lo > hi) & (hi == 0.0))), 1.0, g)
    g = np.where(valid, g, 0.0)
    o = np.where(valid, o, 0.0)
    return g, o, g / (1.0 + o)


def row_scores(terms, masks):
    s, degenerate = _normalized(terms)
    g, o, m = _scores(s, np.asarray(masks, dtype=bool), log10=_libm_log10)
    for arr in (g, o, m):
        arr[degenerate] = 0.0
    return g, o, m


def mask_objectives(terms, weights, masks):
    s, degenerate = _normalized(terms)
    keep = ~degenerate
    s = s[keep]
    w = np.asarray(weights, dtype=np.float64)[keep]
    masks = np.asarray(masks, dtype=bool)
    out = np.zeros(masks.shape[0])
    for j, mask in enumerate(masks):
        _, _, m = _scores(s, mask[None, :])
        out[j] = w @ m
    return out


def _van_leer_slopes(u, axis):
    g = np.pad(u, [(1, 1) if a == axis else (0, 0) for a in range(u.ndim)], mode="edge")
    lo = [slice(None)] * u.ndim
    mid = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[axis], mid[axis], hi[axis] = slice(None, -2), slice(1, -1), slice(2, None)
    a = g[tuple(mid)] - g[tuple(lo)]
    b = g[tuple(hi)] - g[tuple(mid)]
    prod = a * b
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(prod > 0.0, 2.0 * prod / (a + b), 0.0)


def n_flux_divergence(n, c, f, h, D_a, chi0, alpha_a, rho_a, limited=True):
    """Divergence of the cell-density flux with zero flux through the walls."""
    out = np.zeros_like(n)
    for axis in (0, 1):
        lo = [slice(None)] * 2
        hi = [slice(None)] * 2
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        c_face = 0.5 * (c[lo] + c[hi])
        # taxis velocity on the face, positive from lo to hi
        u = (chi0 / (1.0 + alpha_a * c_face) * (c[hi] - c[lo]) + rho_a * (f[hi] - f[lo])) / h
        if not limited:
            n_face = 0.5 * (n[lo] + n[hi])
        else:
            s = _van_leer_slopes(n, axis)
            n_face = np.where(u >= 0.0, n[lo] + 0.5 * s[lo], n[hi] - 0.5 * s[hi])
        flux = -D_a * (n[hi] - n[lo]) / h + u * n_face
        # wall faces carry zero flux
        out[lo] -= flux
        out[hi] += flux
    return out / h
