"""Independent oracles the test suite checks the package against.

Everything here is deliberately written the slow, obvious way (per-element
loops, brute-force sweeps) and never calls back into the code paths it is
used to verify.
"""

import math

import numpy as np


def finite_difference(f, arrays, h=1e-6):
    """Central-difference gradient of scalar ``f()`` w.r.t. each array.

    Perturbs the arrays in place, one coordinate at a time, and restores them.
    """
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            fp = f()
            flat[i] = saved - h
            fm = f()
            flat[i] = saved
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(grad)
    return grads


def relative_error(a, b, floor=1e-3):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


# --- straight-loop re-implementations of the attention stack ---------------------

def softmax_oracle(v):
    m = max(v)
    e = [math.exp(x - m) for x in v]
    s = sum(e)
    return [x / s for x in e]


def mha_oracle(h, wq, wk, wv, wo, allowed=None):
    """Per-node, per-head attention loops; h is (n, d_model)."""
    n = h.shape[0]
    head_outs = []
    for q_w, k_w, v_w in zip(wq, wk, wv):
        d_head = q_w.shape[1]
        out = np.zeros((n, d_head))
        for i in range(n):
            qi = h[i] @ q_w
            neighbors = [j for j in range(n)
                         if allowed is None or allowed[i, j]]
            if not neighbors:
                continue
            scores = [float(qi @ (h[j] @ k_w)) / math.sqrt(d_head)
                      for j in neighbors]
            weights = softmax_oracle(scores)
            for w, j in zip(weights, neighbors):
                out[i] += w * (h[j] @ v_w)
        head_outs.append(out)
    return np.concatenate(head_outs, axis=1) @ wo


def layer_norm_oracle(x, gain, bias, eps=1e-5):
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        row = x[i]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        out[i] = (row - mu) / math.sqrt(var + eps) * gain + bias
    return out


def encoder_layer_oracle(h, layer):
    """Mirror of one post-norm encoder layer from plain arrays."""
    attn = mha_oracle(h, [w.data for w in layer.attn.wq],
                      [w.data for w in layer.attn.wk],
                      [w.data for w in layer.attn.wv], layer.attn.wo.data)
    x = layer_norm_oracle(h + attn, layer.norm1_gain.data, layer.norm1_bias.data)
    ff = np.maximum(x @ layer.fc1_w.data + layer.fc1_b.data, 0) @ layer.fc2_w.data \
        + layer.fc2_b.data
    return layer_norm_oracle(x + ff, layer.norm2_gain.data, layer.norm2_bias.data)


# --- metric oracles ----------------------------------------------------------------

def ap_oracle(scores, labels):
    """Brute-force threshold sweep over distinct scores, descending."""
    scores = [float(s) for s in scores]
    labels = [int(y) for y in labels]
    n_pos = sum(labels)
    assert n_pos > 0
    ap = 0.0
    r_prev = 0.0
    for th in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= th and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= th and y == 0)
        r = tp / n_pos
        p = tp / (tp + fp)
        ap += (r - r_prev) * p
        r_prev = r
    return ap


def tta_oracle(probs, tau, fps, threshold):
    """Literal max over every frame up to and including the onset."""
    intervals = [(tau - t) / fps for t in range(tau + 1) if probs[t] >= threshold]
    return max(intervals) if intervals else 0.0


def mtta_oracle(videos, grid):
    """videos: list of (probs, tau, fps) triples."""
    per_threshold = []
    for th in grid:
        vals = [tta_oracle(p, tau, fps, th) for p, tau, fps in videos]
        per_threshold.append(sum(vals) / len(vals))
    return sum(per_threshold) / len(per_threshold)


def pr_oracle(scores, labels, threshold):
    tp = fp = fn = 0
    for s, y in zip(scores, labels):
        if s >= threshold and y == 1:
            tp += 1
        elif s >= threshold and y == 0:
            fp += 1
        elif s < threshold and y == 1:
            fn += 1
    p = 1.0 if tp + fp == 0 else tp / (tp + fp)
    r = 0.0 if tp + fn == 0 else tp / (tp + fn)
    return p, r


# --- misc -----------------------------------------------------------------------

def adam_reference(theta, grads_seq, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam trajectory; returns theta after applying grads_seq."""
    theta = np.array(theta, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads_seq, start=1):
        g = np.asarray(g, dtype=np.float64)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    return theta


def chi2_uniform_pvalue(counts):
    """P-value of the chi-squared uniformity test over equal-width bins."""
    from scipy.stats import chisquare
    return float(chisquare(counts).pvalue)
