"""NumPy reference implementations of the hot kernels.

These definitions are the semantic reference for the compiled backend in
``_native.pyx``; both expose the same functions over C-contiguous float32 or
float64 arrays. Two-dimensional inputs are row-major with independent rows.
Matrix products are not here on purpose: BLAS via ``numpy`` serves both
backends.
"""

import numpy as np


def softmax_rows_fwd(x):
    """Row softmax, stabilized by per-row max subtraction.

    Entries of -inf are legal (masked attention scores) and get weight 0.
    A row that is entirely -inf (fully masked) yields an all-zero row.
    """
    m = np.max(x, axis=1, keepdims=True)
    dead = np.isneginf(m)
    if dead.any():
        m = np.where(dead, 0.0, m)
    e = np.exp(x - m)
    s = np.sum(e, axis=1, keepdims=True)
    if dead.any():
        s[dead] = 1.0
    return e / s


def softmax_rows_bwd(y, gy):
    """Gradient of row softmax given its output ``y`` and upstream ``gy``."""
    dot = np.sum(y * gy, axis=1, keepdims=True)
    return y * (gy - dot)


def layer_norm_fwd(x, gain, bias, eps):
    """Per-row normalization followed by the elementwise affine map.

    Returns ``(y, xhat, inv_std)`` where ``xhat`` and ``inv_std`` are the
    saved intermediates the backward pass needs.
    """
    mu = np.mean(x, axis=1, keepdims=True)
    centered = x - mu
    var = np.mean(centered * centered, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    return xhat * gain + bias, xhat, inv_std[:, 0]


def layer_norm_bwd(gy, xhat, inv_std, gain):
    """Gradients of layer_norm w.r.t. input, gain, and bias."""
    ghat = gy * gain
    mean_g = np.mean(ghat, axis=1, keepdims=True)
    mean_gx = np.mean(ghat * xhat, axis=1, keepdims=True)
    gx = inv_std[:, None] * (ghat - mean_g - xhat * mean_gx)
    ggain = np.sum(gy * xhat, axis=0)
    gbias = np.sum(gy, axis=0)
    return gx, ggain, gbias


def relu_fwd(x):
    return np.maximum(x, 0)


def relu_bwd(y, gy):
    """Masked gradient; the subgradient at 0 is 0, so ``y > 0`` is the mask."""
    return gy * (y > 0)


def softmax_xent_fwd(logits, onehot):
    """Mean over rows of the cross-entropy between softmax(logits) and onehot.

    Uses the shifted log-sum-exp so saturated logits do not overflow.
    Returns ``(loss, probs)``.
    """
    m = np.max(logits, axis=1, keepdims=True)
    z = logits - m
    e = np.exp(z)
    s = np.sum(e, axis=1, keepdims=True)
    logp = z - np.log(s)
    loss = -np.sum(onehot * logp) / logits.shape[0]
    return float(loss), e / s


def softmax_xent_bwd(probs, onehot, gloss):
    return (probs - onehot) * (gloss / probs.shape[0])


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, in place on ``p``, ``m``, ``v``.

    ``t`` is the post-increment step counter (1 on the first update).
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
