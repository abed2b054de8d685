"""Hot numeric kernels for dense-layer training, Adam and quantile distances.

Each kernel exists twice: an explicit-loop version compiled with numba
``@njit`` and a vectorised numpy version.  :mod:`ricmatch.accel` picks one
set at import time based on ``RICMATCH_BACKEND``.  Both sets share
signatures and write into caller-provided output buffers.

Activation codes: 0 = linear, 1 = sigmoid, 2 = tanh.
"""

import math

import numpy as np

LINEAR = 0
SIGMOID = 1
TANH = 2


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def _activate_np(z, act):
    if act == SIGMOID:
        # stable on both tails
        e = np.exp(-np.abs(z))
        return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    if act == TANH:
        return np.tanh(z)
    return z


def layer_forward_np(W, b, h, act, out):
    z = h @ W.T
    z += b
    out[...] = _activate_np(z, act)


def layer_backward_np(W, h_prev, a, delta, act, gW, gb, delta_prev, need_prev):
    """``delta`` holds dL/da on entry and is overwritten with dL/dz."""
    if act == SIGMOID:
        delta *= a * (1.0 - a)
    elif act == TANH:
        delta *= 1.0 - a * a
    gW[...] = delta.T @ h_prev
    gb[...] = delta.sum(axis=0)
    if need_prev:
        delta_prev[...] = delta @ W


def adam_update_np(theta, g, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def sorted_quantile_l1_np(a_sorted, b_sorted):
    n = max(a_sorted.shape[0], b_sorted.shape[0])
    p = (np.arange(n) + 0.5) / n
    ia = np.minimum((p * a_sorted.shape[0]).astype(np.int64), a_sorted.shape[0] - 1)
    ib = np.minimum((p * b_sorted.shape[0]).astype(np.int64), b_sorted.shape[0] - 1)
    return float(np.abs(a_sorted[ia] - b_sorted[ib]).sum() / n)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


if njit is not None:

    @njit(cache=True)
    def layer_forward_nb(W, b, h, act, out):
        z = np.dot(h, W.T)
        rows, cols = z.shape
        for i in range(rows):
            for j in range(cols):
                x = z[i, j] + b[j]
                if act == SIGMOID:
                    if x >= 0.0:
                        out[i, j] = 1.0 / (1.0 + math.exp(-x))
                    else:
                        e = math.exp(x)
                        out[i, j] = e / (1.0 + e)
                elif act == TANH:
                    # libm tanh is ~5x slower than exp here
                    e = math.exp(-2.0 * abs(x))
                    t = (1.0 - e) / (1.0 + e)
                    out[i, j] = t if x >= 0.0 else -t
                else:
                    out[i, j] = x

    @njit(cache=True)
    def layer_backward_nb(W, h_prev, a, delta, act, gW, gb, delta_prev, need_prev):
        rows, cols = delta.shape
        for j in range(cols):
            gb[j] = 0.0
        for i in range(rows):
            for j in range(cols):
                d = delta[i, j]
                if act == SIGMOID:
                    d *= a[i, j] * (1.0 - a[i, j])
                elif act == TANH:
                    d *= 1.0 - a[i, j] * a[i, j]
                delta[i, j] = d
                gb[j] += d
        gW[:, :] = np.dot(delta.T, h_prev)
        if need_prev:
            delta_prev[:, :] = np.dot(delta, W)

    @njit(cache=True)
    def adam_update_nb(theta, g, m, v, lr, beta1, beta2, eps, t):
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for k in range(theta.shape[0]):
            gk = g[k]
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk
            v[k] = beta2 * v[k] + (1.0 - beta2) * (gk * gk)
            theta[k] -= lr * (m[k] / c1) / (math.sqrt(v[k] / c2) + eps)

    @njit(cache=True)
    def sorted_quantile_l1_nb(a_sorted, b_sorted):
        na = a_sorted.shape[0]
        nb = b_sorted.shape[0]
        n = max(na, nb)
        total = 0.0
        for i in range(n):
            p = (i + 0.5) / n
            ia = min(int(p * na), na - 1)
            ib = min(int(p * nb), nb - 1)
            total += abs(a_sorted[ia] - b_sorted[ib])
        return total / n
