"""Neural-network primitives with explicit forward and backward passes.

Everything operates on plain numpy arrays, float32 in the training path; the
ops are dtype-preserving so the finite-difference tests can run them in
float64. Convolutions are valid (no padding), stride 1, implemented via
im2col so the heavy lifting is a matrix product.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputDomainError


# ---------------------------------------------------------------------------
# 1-D convolution
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(B, C, L) -> (B, L_out, C*K) patch matrix."""
    b, c, length = x.shape
    l_out = length - kernel + 1
    cols = np.empty((b, l_out, c, kernel), dtype=x.dtype)
    for k in range(kernel):
        cols[:, :, :, k] = x[:, :, k:k + l_out].transpose(0, 2, 1)
    return cols.reshape(b, l_out, c * kernel)


def conv1d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Valid cross-correlation, stride 1.

    x: (B, C_in, L); weights: (C_out, C_in, K); bias: (C_out,).
    Returns (out, cache) with out of shape (B, C_out, L-K+1).
    """
    if x.ndim != 3:
        raise InputDomainError(f"conv1d input must be (batch, channels, length), got {x.shape}")
    c_out, c_in, kernel = weights.shape
    if x.shape[1] != c_in:
        raise InputDomainError(f"conv1d channel mismatch: input {x.shape[1]}, weights {c_in}")
    if x.shape[2] < kernel:
        raise InputDomainError(f"conv1d input length {x.shape[2]} shorter than kernel {kernel}")
    cols = _im2col(x, kernel)                          # (B, L_out, C*K)
    w2 = weights.reshape(c_out, c_in * kernel)
    out = cols @ w2.T + bias                           # (B, L_out, C_out)
    return out.transpose(0, 2, 1), (x.shape, cols, weights)


def conv1d_backward(dout: np.ndarray, cache):
    """Gradients for conv1d: returns (dx, dweights, dbias)."""
    x_shape, cols, weights = cache
    c_out, c_in, kernel = weights.shape
    b, _, l_out = dout.shape
    dflat = dout.transpose(0, 2, 1)                    # (B, L_out, C_out)
    dbias = dflat.sum(axis=(0, 1))
    dw = dflat.reshape(-1, c_out).T @ cols.reshape(-1, c_in * kernel)
    dcols = dflat @ weights.reshape(c_out, c_in * kernel)   # (B, L_out, C*K)
    dcols = dcols.reshape(b, l_out, c_in, kernel)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for k in range(kernel):
        dx[:, :, k:k + l_out] += dcols[:, :, :, k].transpose(0, 2, 1)
    return dx, dw.reshape(weights.shape), dbias


# ---------------------------------------------------------------------------
# max pooling (width 2, stride 2)
# ---------------------------------------------------------------------------

def maxpool1d(x: np.ndarray):
    """Pairwise max over the length axis; an odd trailing element is dropped.

    Ties route the gradient to the first element of the pair.
    """
    if x.shape[-1] < 2:
        raise InputDomainError("maxpool1d needs length >= 2")
    l_out = x.shape[-1] // 2
    pairs = x[..., :2 * l_out].reshape(*x.shape[:-1], l_out, 2)
    idx = pairs.argmax(axis=-1)      # first index wins ties
    out = np.take_along_axis(pairs, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool1d_backward(dout: np.ndarray, cache):
    x_shape, idx = cache
    l_out = idx.shape[-1]
    dpairs = np.zeros((*x_shape[:-1], l_out, 2), dtype=dout.dtype)
    np.put_along_axis(dpairs, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[..., :2 * l_out] = dpairs.reshape(*x_shape[:-1], 2 * l_out)
    return dx


# ---------------------------------------------------------------------------
# dense / relu / dropout
# ---------------------------------------------------------------------------

def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Affine map x @ W + b; x: (B, n_in), W: (n_in, n_out)."""
    if x.shape[1] != weights.shape[0]:
        raise InputDomainError(f"dense shape mismatch: input {x.shape[1]}, weights {weights.shape[0]}")
    return x @ weights + bias, (x, weights)


def dense_backward(dout: np.ndarray, cache):
    x, weights = cache
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


def relu(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, x


def relu_backward(dout: np.ndarray, cache):
    return np.where(cache > 0, dout, 0)


def dropout(x: np.ndarray, rate: float, train: bool, rng: np.random.Generator | None = None):
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Identity in eval mode. Deterministic given the generator state.
    """
    if not (0.0 <= rate < 1.0):
        raise InputDomainError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise InputDomainError("train-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask):
    return dout if mask is None else dout * mask


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, computed max-shifted for overflow safety."""
    logits = np.atleast_2d(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood; log is clamped at 1e-12.

    labels are integer class indices (0-based).
    """
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, 1e-12)).mean(dtype=np.float64))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Fused loss; returns (loss, dlogits) with dlogits = (q - p) / batch."""
    probs = softmax(logits)
    loss = cross_entropy(probs, labels)
    dlogits = probs.copy()
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dlogits /= len(labels)
    return loss, dlogits.astype(logits.dtype)


# ---------------------------------------------------------------------------
# maximum mean discrepancy
# ---------------------------------------------------------------------------

def mmd_linear(feats_source: np.ndarray, feats_target: np.ndarray):
    """Squared Euclidean distance between feature means, with gradients.

    Returns (value, dsource, dtarget); dsource rows are 2*(mean_s - mean_t)/n_s
    and dtarget rows the negative counterpart.
    """
    if len(feats_source) == 0 or len(feats_target) == 0:
        raise InputDomainError("mmd needs at least one sample per side")
    ms = feats_source.mean(axis=0, dtype=np.float64)
    mt = feats_target.mean(axis=0, dtype=np.float64)
    diff = ms - mt
    value = float(diff @ diff)
    ds = np.broadcast_to((2.0 * diff / len(feats_source)).astype(feats_source.dtype),
                         feats_source.shape).copy()
    dt = np.broadcast_to((-2.0 * diff / len(feats_target)).astype(feats_target.dtype),
                         feats_target.shape).copy()
    return value, ds, dt


def mmd_linear_unbiased(feats_source: np.ndarray, feats_target: np.ndarray):
    """Unbiased linear-kernel MMD^2 estimate with gradients.

    Estimates the same population quantity as mmd_linear but without the
    tr(cov)/n bias of the plain squared mean difference, so minimizing it on
    mini-batches does not reward shrinking the feature variance. Can be
    slightly negative on finite samples. Needs two samples per side.
    """
    ns, nt = len(feats_source), len(feats_target)
    if ns < 2 or nt < 2:
        raise InputDomainError("unbiased mmd needs at least two samples per side")
    xs = feats_source.astype(np.float64)
    xt = feats_target.astype(np.float64)
    sum_s = xs.sum(axis=0)
    sum_t = xt.sum(axis=0)
    ss = float(sum_s @ sum_s) - float((xs * xs).sum())
    tt = float(sum_t @ sum_t) - float((xt * xt).sum())
    st = float(sum_s @ sum_t)
    value = ss / (ns * (ns - 1)) + tt / (nt * (nt - 1)) - 2.0 * st / (ns * nt)
    ds = (2.0 * (sum_s - xs) / (ns * (ns - 1)) - 2.0 * sum_t / (ns * nt))
    dt = (2.0 * (sum_t - xt) / (nt * (nt - 1)) - 2.0 * sum_s / (ns * nt))
    return value, ds.astype(feats_source.dtype), dt.astype(feats_target.dtype)


def mmd_rbf(feats_source: np.ndarray, feats_target: np.ndarray, sigma: float | None = None):
    """Unbiased RBF-kernel MMD^2 with gradients (sensitivity-study alternative).

    sigma defaults to the median pairwise distance of the pooled batch and is
    treated as a constant in the gradient.
    """
    ns, nt = len(feats_source), len(feats_target)
    if ns < 2 or nt < 2:
        raise InputDomainError("rbf mmd needs at least two samples per side")
    xs = feats_source.astype(np.float64)
    xt = feats_target.astype(np.float64)

    def sqdist(a, b):
        return np.maximum(
            (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T, 0.0)

    dss, dtt, dst = sqdist(xs, xs), sqdist(xt, xt), sqdist(xs, xt)
    if sigma is None:
        pool = np.concatenate([dss[np.triu_indices(ns, 1)], dtt[np.triu_indices(nt, 1)],
                               dst.ravel()])
        sigma = float(np.sqrt(np.median(pool) / 2.0)) or 1.0
    gamma = 1.0 / (2.0 * sigma * sigma)
    kss, ktt, kst = np.exp(-gamma * dss), np.exp(-gamma * dtt), np.exp(-gamma * dst)
    np.fill_diagonal(kss, 0.0)
    np.fill_diagonal(ktt, 0.0)
    value = kss.sum() / (ns * (ns - 1)) + ktt.sum() / (nt * (nt - 1)) - 2.0 * kst.mean()

    # d k(x,y)/dx = -2 gamma (x - y) k(x,y)
    gs = np.zeros_like(xs)
    gt = np.zeros_like(xt)
    for i in range(ns):
        gs[i] += (-2.0 * gamma / (ns * (ns - 1))) * 2.0 * (kss[i][:, None] * (xs[i] - xs)).sum(0)
        gs[i] += (2.0 * 2.0 * gamma / (ns * nt)) * (kst[i][:, None] * (xs[i] - xt)).sum(0)
    for j in range(nt):
        gt[j] += (-2.0 * gamma / (nt * (nt - 1))) * 2.0 * (ktt[j][:, None] * (xt[j] - xt)).sum(0)
        gt[j] += (2.0 * 2.0 * gamma / (ns * nt)) * (kst[:, j][:, None] * (xt[j] - xs)).sum(0)
    return float(value), gs.astype(feats_source.dtype), gt.astype(feats_target.dtype)
