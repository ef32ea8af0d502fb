import numpy as np
from scipy.special import logsumexp, softmax

from ..sat_defs import PROB_FLOOR


"""
Forward/backward pairs for the graph nodes in sat_autograd.
Every *_backward takes the upstream gradient g (same shape as the forward
output) and returns gradients for the forward inputs, in argument order.
Rows are batch items; the last axis is the feature axis.
"""


def affine_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # out[..., i] = sum_j W[i, j] x[..., j] + b[i]
    return x @ W.T + b


def affine_backward(g: np.ndarray, x: np.ndarray, W: np.ndarray):
    gx = g @ W
    if x.ndim == 1:
        gW = np.outer(g, x)
        gb = g.copy()
    else:
        gW = g.T @ x
        gb = g.sum(axis=0)
    return gx, gW, gb


def tanh_backward(g: np.ndarray, y: np.ndarray) -> np.ndarray:
    return g * (1.0 - y * y)


def bag_mean_forward(table: np.ndarray, bags) -> np.ndarray:
    # out[r] = mean of table rows listed in bags[r]
    out = np.empty((len(bags), table.shape[1]), dtype=np.float64)
    for r, ids in enumerate(bags):
        out[r] = table[ids].mean(axis=0)
    return out


def bag_mean_backward(g: np.ndarray, bags, table_shape) -> np.ndarray:
    gtable = np.zeros(table_shape, dtype=np.float64)
    for r, ids in enumerate(bags):
        np.add.at(gtable, ids, g[r] / len(ids))
    return gtable


def softmax_forward(z: np.ndarray) -> np.ndarray:
    # scipy subtracts the max internally
    return softmax(z, axis=-1)


def softmax_backward(g: np.ndarray, y: np.ndarray) -> np.ndarray:
    return y * (g - np.sum(g * y, axis=-1, keepdims=True))


def cross_entropy_forward(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    # H(q, p) = -sum_i q_i ln max(p_i, floor)
    return -np.sum(q * np.log(np.maximum(p, PROB_FLOOR)), axis=-1)


def cross_entropy_backward(g: np.ndarray, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    active = p >= PROB_FLOOR
    safe = np.where(active, p, 1.0)
    return np.where(active, -q / safe, 0.0) * np.expand_dims(g, -1)


def l2_normalize_forward(x: np.ndarray):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / norms, norms


def l2_normalize_backward(g: np.ndarray, u: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d(x/|x|) = (I - u u^T) / |x|
    return (g - u * np.sum(g * u, axis=-1, keepdims=True)) / norms


def cosine_forward(a: np.ndarray, b: np.ndarray):
    # a.b / sqrt(|a|^2 |b|^2) is exactly 1.0 when a == b
    aa = np.sum(a * a, axis=-1)
    bb = np.sum(b * b, axis=-1)
    out = np.sum(a * b, axis=-1) / np.sqrt(aa * bb)
    return out, (a, b, out, aa, bb)


def cosine_backward(g: np.ndarray, cache):
    # d cos / da = b / (|a||b|) - cos a / |a|^2
    a, b, out, aa, bb = cache
    norm_ab = np.expand_dims(np.sqrt(aa * bb), -1)
    c = np.expand_dims(out, -1)
    gg = np.expand_dims(g, -1)
    ga = gg * (b / norm_ab - c * a / np.expand_dims(aa, -1))
    gb = gg * (a / norm_ab - c * b / np.expand_dims(bb, -1))
    return ga, gb


def logsumexp_forward(x: np.ndarray) -> np.ndarray:
    return logsumexp(x, axis=-1)


def logsumexp_backward(g: np.ndarray, x: np.ndarray, out: np.ndarray) -> np.ndarray:
    return np.exp(x - np.expand_dims(out, -1)) * np.expand_dims(g, -1)
