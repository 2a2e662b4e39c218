"""Tensor primitives with explicit forward and backward passes.

All functions work on (N, C, H, W) arrays in whatever float dtype the caller
supplies (float32 for training, float64 for gradient checks). Forward calls
return (output, cache); the matching *_backward consumes the upstream
gradient plus the cache and returns input/parameter gradients.
"""

from __future__ import annotations

import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger(__name__)


def _check_4d(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4:
        raise ValueError(f"{name} must be (N, C, H, W), got shape {x.shape}")


# ---------------------------------------------------------------------------
# Convolution (stride 1, zero 'same' padding, square kernels)
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, C, H, W) -> (N, H*W, C*k*k) patch matrix under same-padding."""
    n, c, h, w = x.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h * w, c * k * k)
    return np.ascontiguousarray(cols)


def _col2im(cols: np.ndarray, x_shape: tuple, k: int) -> np.ndarray:
    """Adjoint of _im2col: scatter patch gradients back onto the input grid."""
    n, c, h, w = x_shape
    pad = (k - 1) // 2
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols6 = cols.reshape(n, h, w, c, k, k)
    for di in range(k):
        for dj in range(k):
            xp[:, :, di : di + h, dj : dj + w] += cols6[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    if pad == 0:
        return xp
    return xp[:, :, pad : pad + h, pad : pad + w]


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Cross-correlation with stride 1 and zero same-padding.

    weight is (C_out, C_in, k, k) with k in {1, 3}; spatial size is preserved.
    """
    _check_4d(x)
    c_out, c_in, k, k2 = weight.shape
    if k != k2 or k not in (1, 3):
        raise ValueError(f"kernel must be 1x1 or 3x3, got {k}x{k2}")
    if x.shape[1] != c_in:
        raise ValueError(f"input has {x.shape[1]} channels, weights expect {c_in}")
    n, _, h, w = x.shape
    cols = _im2col(x, k)  # (N, H*W, C_in*k*k)
    wmat = weight.reshape(c_out, c_in * k * k)
    out = cols @ wmat.T + bias
    out = out.transpose(0, 2, 1).reshape(n, c_out, h, w)
    cache = (cols, weight, x.shape)
    return out, cache


def conv2d_backward(dy: np.ndarray, cache):
    cols, weight, x_shape = cache
    c_out, c_in, k, _ = weight.shape
    n, _, h, w = x_shape
    dy_mat = dy.reshape(n, c_out, h * w).transpose(0, 2, 1)  # (N, H*W, C_out)
    dw = np.einsum("npo,npi->oi", dy_mat, cols).reshape(weight.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = dy_mat @ weight.reshape(c_out, c_in * k * k)
    dx = _col2im(dcols, x_shape, k)
    return dx, dw, db


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------


class BatchNormState:
    """Per-layer running statistics plus the seen-a-batch flag."""

    def __init__(self, channels: int, dtype=np.float64):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.initialized = False
        self._warned = False


def batch_norm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    state: BatchNormState,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
):
    """Normalize per channel over (N, H, W); running stats track train batches."""
    _check_4d(x)
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        state.running_mean = (1 - momentum) * state.running_mean + momentum * mean
        state.running_var = (1 - momentum) * state.running_var + momentum * var
        state.initialized = True
    else:
        if not state.initialized and not state._warned:
            log.warning("batch norm evaluated before any training step; using init stats")
            state._warned = True
        mean = state.running_mean
        var = state.running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, gamma, inv_std, train)
    return out, cache


def batch_norm_backward(dy: np.ndarray, cache):
    xhat, gamma, inv_std, train = cache
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    if not train:
        dx = dy * (gamma * inv_std)[None, :, None, None]
        return dx, dgamma, dbeta
    n = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dxhat = dy * gamma[None, :, None, None]
    mean_dxhat = dxhat.mean(axis=(0, 2, 3))[None, :, None, None]
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3))[None, :, None, None]
    dx = inv_std[None, :, None, None] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# ReLU / max-pool / bilinear upsample
# ---------------------------------------------------------------------------


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def maxpool2(x: np.ndarray):
    """2x2 max pooling with stride 2; stores argmax for gradient routing."""
    _check_4d(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max pool needs even spatial dims, got {h}x{w}")
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dy: np.ndarray, cache) -> np.ndarray:
    idx, x_shape = cache
    n, c, h, w = x_shape
    flat = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(flat, idx[..., None], dy[..., None], axis=-1)
    blocks = flat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(n, c, h, w)


def _upsample_coeffs(in_len: int, dtype) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    out_len = 2 * in_len
    if in_len == 1:
        coords = np.zeros(out_len)
    else:
        coords = np.arange(out_len) * ((in_len - 1) / (out_len - 1))
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, in_len - 1)
    frac = (coords - lo).astype(dtype)
    return lo, hi, frac


def upsample_bilinear2(x: np.ndarray):
    """Corner-aligned bilinear x2 upsampling; backward is the exact adjoint."""
    _check_4d(x)
    n, c, h, w = x.shape
    lo_h, hi_h, fh = _upsample_coeffs(h, x.dtype)
    lo_w, hi_w, fw = _upsample_coeffs(w, x.dtype)
    rows = x[:, :, lo_h, :] * (1 - fh)[None, None, :, None] + x[:, :, hi_h, :] * fh[None, None, :, None]
    out = rows[:, :, :, lo_w] * (1 - fw)[None, None, None, :] + rows[:, :, :, hi_w] * fw[None, None, None, :]
    return out, (x.shape, lo_h, hi_h, fh, lo_w, hi_w, fw)


def upsample_bilinear2_backward(dy: np.ndarray, cache) -> np.ndarray:
    x_shape, lo_h, hi_h, fh, lo_w, hi_w, fw = cache
    n, c, h, w = x_shape
    # Width scatter: (N, C, 2H, 2W) -> (N, C, 2H, W), via a width-first view.
    drows = np.zeros((n, c, 2 * h, w), dtype=dy.dtype)
    drows_t = drows.transpose(3, 0, 1, 2)
    np.add.at(drows_t, lo_w, (dy * (1 - fw)[None, None, None, :]).transpose(3, 0, 1, 2))
    np.add.at(drows_t, hi_w, (dy * fw[None, None, None, :]).transpose(3, 0, 1, 2))
    # Height scatter: (N, C, 2H, W) -> (N, C, H, W).
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    dx_t = dx.transpose(2, 0, 1, 3)
    np.add.at(dx_t, lo_h, (drows * (1 - fh)[None, None, :, None]).transpose(2, 0, 1, 3))
    np.add.at(dx_t, hi_h, (drows * fh[None, None, :, None]).transpose(2, 0, 1, 3))
    return dx
