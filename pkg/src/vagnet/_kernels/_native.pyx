# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel core: fused single-pass loops for the hot paths.

Mirrors the contracts of ``pyk`` (the NumPy reference) for float32 and
float64 inputs. Reductions accumulate in double precision regardless of the
storage dtype.
"""

import numpy as np

cimport cython
from libc.math cimport INFINITY, exp, log, pow, sqrt

ctypedef fused real:
    float
    double


cdef inline object _empty2(Py_ssize_t r, Py_ssize_t c, bint single):
    if single:
        return np.empty((r, c), dtype=np.float32)
    return np.empty((r, c), dtype=np.float64)


cdef inline object _empty1(Py_ssize_t n, bint single):
    if single:
        return np.empty(n, dtype=np.float32)
    return np.empty(n, dtype=np.float64)


def softmax_rows_fwd(real[:, ::1] x):
    """Row softmax, stabilized by per-row max subtraction.

    Entries of -inf are legal (masked attention scores) and get weight 0.
    A row that is entirely -inf (fully masked) yields an all-zero row.
    """
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out = _empty2(r, c, real is float)
    cdef real[:, ::1] o = out
    cdef double m, s, e
    for i in range(r):
        m = x[i, 0]
        for j in range(1, c):
            if x[i, j] > m:
                m = x[i, j]
        if m == -INFINITY:
            for j in range(c):
                o[i, j] = 0.0
            continue
        s = 0.0
        for j in range(c):
            e = exp(x[i, j] - m)
            o[i, j] = <real> e
            s += e
        for j in range(c):
            o[i, j] = <real> (o[i, j] / s)
    return out


def softmax_rows_bwd(real[:, ::1] y, real[:, ::1] gy):
    """Gradient of row softmax given its output ``y`` and upstream ``gy``."""
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    out = _empty2(r, c, real is float)
    cdef real[:, ::1] o = out
    cdef double dot
    for i in range(r):
        dot = 0.0
        for j in range(c):
            dot += y[i, j] * gy[i, j]
        for j in range(c):
            o[i, j] = <real> (y[i, j] * (gy[i, j] - dot))
    return out


def layer_norm_fwd(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    """Per-row normalization followed by the elementwise affine map.

    Returns ``(y, xhat, inv_std)``.
    """
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    y = _empty2(r, c, real is float)
    xh = _empty2(r, c, real is float)
    istd = _empty1(r, real is float)
    cdef real[:, ::1] yv = y
    cdef real[:, ::1] xv = xh
    cdef real[::1] sv = istd
    cdef double mu, var, d, inv
    for i in range(r):
        mu = 0.0
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = 0.0
        for j in range(c):
            d = x[i, j] - mu
            var += d * d
        var /= c
        inv = 1.0 / sqrt(var + eps)
        sv[i] = <real> inv
        for j in range(c):
            d = (x[i, j] - mu) * inv
            xv[i, j] = <real> d
            yv[i, j] = <real> (d * gain[j] + bias[j])
    return y, xh, istd


def layer_norm_bwd(real[:, ::1] gy, real[:, ::1] xhat, real[::1] inv_std,
                   real[::1] gain):
    """Gradients of layer_norm w.r.t. input, gain, and bias."""
    cdef Py_ssize_t r = gy.shape[0], c = gy.shape[1], i, j
    gx = _empty2(r, c, real is float)
    ggain = np.zeros(c, dtype=np.float64)
    gbias = np.zeros(c, dtype=np.float64)
    cdef real[:, ::1] gv = gx
    cdef double[::1] ga = ggain
    cdef double[::1] gb = gbias
    cdef double mean_g, mean_gx, h
    for i in range(r):
        mean_g = 0.0
        mean_gx = 0.0
        for j in range(c):
            h = gy[i, j] * gain[j]
            mean_g += h
            mean_gx += h * xhat[i, j]
        mean_g /= c
        mean_gx /= c
        for j in range(c):
            h = gy[i, j] * gain[j]
            gv[i, j] = <real> (inv_std[i] * (h - mean_g - xhat[i, j] * mean_gx))
            ga[j] += gy[i, j] * xhat[i, j]
            gb[j] += gy[i, j]
    if real is float:
        return gx, ggain.astype(np.float32), gbias.astype(np.float32)
    return gx, ggain, gbias


def relu_fwd(real[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out = _empty2(r, c, real is float)
    cdef real[:, ::1] o = out
    for i in range(r):
        for j in range(c):
            if x[i, j] > 0.0 or x[i, j] != x[i, j]:  # keep NaN flowing
                o[i, j] = x[i, j]
            else:
                o[i, j] = 0.0
    return out


def relu_bwd(real[:, ::1] y, real[:, ::1] gy):
    """Masked gradient; the subgradient at 0 is 0, so ``y > 0`` is the mask."""
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    out = _empty2(r, c, real is float)
    cdef real[:, ::1] o = out
    for i in range(r):
        for j in range(c):
            o[i, j] = gy[i, j] if y[i, j] > 0.0 else 0.0
    return out


def softmax_xent_fwd(real[:, ::1] logits, real[:, ::1] onehot):
    """Mean over rows of the cross-entropy between softmax(logits) and onehot.

    Returns ``(loss, probs)``.
    """
    cdef Py_ssize_t r = logits.shape[0], c = logits.shape[1], i, j
    probs = _empty2(r, c, real is float)
    cdef real[:, ::1] pv = probs
    cdef double m, s, e, loss = 0.0, logs
    for i in range(r):
        m = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(c):
            e = exp(logits[i, j] - m)
            pv[i, j] = <real> e
            s += e
        logs = log(s)
        for j in range(c):
            loss -= onehot[i, j] * ((logits[i, j] - m) - logs)
            pv[i, j] = <real> (pv[i, j] / s)
    return loss / r, probs


def softmax_xent_bwd(real[:, ::1] probs, real[:, ::1] onehot, double gloss):
    cdef Py_ssize_t r = probs.shape[0], c = probs.shape[1], i, j
    out = _empty2(r, c, real is float)
    cdef real[:, ::1] o = out
    cdef double scale = gloss / r
    for i in range(r):
        for j in range(c):
            o[i, j] = <real> ((probs[i, j] - onehot[i, j]) * scale)
    return out


def adam_update(real[::1] p, real[::1] g, real[::1] m, real[::1] v,
                long t, double lr, double beta1, double beta2, double eps):
    """One bias-corrected Adam update, in place on ``p``, ``m``, ``v``.

    ``t`` is the post-increment step counter (1 on the first update).
    """
    cdef Py_ssize_t n = p.shape[0], i
    cdef double bc1 = 1.0 - pow(beta1, t)
    cdef double bc2 = 1.0 - pow(beta2, t)
    cdef double mi, vi
    for i in range(n):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        m[i] = <real> mi
        v[i] = <real> vi
        p[i] = <real> (p[i] - lr * (mi / bc1) / (sqrt(vi / bc2) + eps))
