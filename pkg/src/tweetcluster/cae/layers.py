"""Forward and backward passes for the autoencoder's building blocks.

All batched functions use ``(batch, channels, height, width)`` arrays.
Convolutions are 3x3 cross-correlations with zero "same" padding. Each is
computed with a single matrix product, shifting whichever side of it has
fewer channels.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 3


def _check_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> None:
    if x.ndim != 4:
        raise ValueError(f"expected a 4-D batch, got shape {x.shape}")
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernel expects {w.shape[1]}")
    if w.shape[2:] != (KERNEL, KERNEL) or b.shape != (w.shape[0],):
        raise ValueError("weights must be (out, in, 3, 3) with (out,) biases")


def _im2col(xp: np.ndarray, H: int, W: int) -> np.ndarray:
    """``(B*H*W, C*9)`` patch matrix of a padded batch, columns ordered (c, i, j)."""
    B, C = xp.shape[:2]
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, C * KERNEL * KERNEL)


def _stack_kernels(w: np.ndarray) -> np.ndarray:
    """``(9*O, C)`` matrix whose row ``k*O + o`` is ``w[o, :, i, j]`` with ``k = 3i + j``."""
    O, C = w.shape[:2]
    return w.transpose(2, 3, 0, 1).reshape(KERNEL * KERNEL * O, C)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_conv(x, w, b)
    B, C, H, W = x.shape
    O = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    if C <= O:
        # few input channels: gather shifted inputs, then one product
        out = _im2col(xp, H, W) @ w.reshape(O, -1).T
        out = out.reshape(B, H, W, O).transpose(0, 3, 1, 2)
        return out + b[:, None, None]
    # few output channels: one product per offset stack, then shift-and-add
    Y = np.matmul(_stack_kernels(w), xp.reshape(B, C, -1))
    Y = Y.reshape(B, KERNEL * KERNEL, O, H + 2, W + 2)
    out = np.zeros((B, O, H, W), dtype=Y.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            out += Y[:, KERNEL * i + j, :, i:i + H, j:j + W]
    return out + b[:, None, None]


def conv2d_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients ``(dx, dw, db)`` of a same-padded 3x3 convolution."""
    B, C, H, W = x.shape
    O = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    db = dout.sum(axis=(0, 2, 3))
    if C <= O:
        cols = _im2col(xp, H, W)
        g = dout.transpose(0, 2, 3, 1).reshape(B * H * W, O)
        dw = (g.T @ cols).reshape(w.shape)
        dcols = (g @ w.reshape(O, -1)).reshape(B, H, W, C, KERNEL, KERNEL)
        dxp = np.zeros_like(xp)
        for i in range(KERNEL):
            for j in range(KERNEL):
                dxp[:, :, i:i + H, j:j + W] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, 1:-1, 1:-1], dw, db
    # place the output gradient at each of the nine offsets of the padded frame
    gs = np.zeros((B, KERNEL * KERNEL, O, H + 2, W + 2), dtype=dout.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            gs[:, KERNEL * i + j, :, i:i + H, j:j + W] = dout
    gs = gs.reshape(B, KERNEL * KERNEL * O, -1)
    flat = xp.reshape(B, C, -1)
    dk = np.zeros((KERNEL * KERNEL * O, C), dtype=dout.dtype)
    for n in range(B):
        dk += gs[n] @ flat[n].T
    dw = dk.reshape(KERNEL, KERNEL, O, C).transpose(2, 3, 0, 1)
    dxp = np.matmul(_stack_kernels(w).T, gs).reshape(B, C, H + 2, W + 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Single-sample convolution of a ``C x H x W`` tensor."""
    return conv2d_forward(np.asarray(x)[None], w, b)[0]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def maxpool_forward(x: np.ndarray, pool: tuple[int, int]):
    """Non-overlapping max pooling; returns the pooled batch and flat argmax per window."""
    r, c = pool
    B, C, H, W = x.shape
    if H % r or W % c:
        raise ValueError(f"pool {pool} does not divide spatial shape {(H, W)}")
    win = x.reshape(B, C, H // r, r, W // c, c).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(B, C, H // r, W // c, r * c)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(dout: np.ndarray, arg: np.ndarray, pool: tuple[int, int]) -> np.ndarray:
    r, c = pool
    B, C, h, w = dout.shape
    dwin = np.zeros((B, C, h, w, r * c), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(B, C, h, w, r, c).transpose(0, 1, 2, 4, 3, 5)
    return dwin.reshape(B, C, h * r, w * c)


def maxpool2d(x: np.ndarray, pool: tuple[int, int]):
    """Single-sample pooling of a ``C x H x W`` tensor."""
    out, arg = maxpool_forward(np.asarray(x)[None], pool)
    return out[0], arg[0]


def upsample_forward(x: np.ndarray, factor: tuple[int, int]) -> np.ndarray:
    r, c = factor
    return x.repeat(r, axis=-2).repeat(c, axis=-1)


def upsample_backward(dout: np.ndarray, factor: tuple[int, int]) -> np.ndarray:
    r, c = factor
    *lead, H, W = dout.shape
    return dout.reshape(*lead, H // r, r, W // c, c).sum(axis=(-3, -1))


def upsample2d(x: np.ndarray, factor: tuple[int, int]) -> np.ndarray:
    return upsample_forward(np.asarray(x), factor)


def l2_normalize_forward(u: np.ndarray, eps: float = 1e-12):
    """Row-wise ``u / (||u|| + eps)``; returns output and norms."""
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    return u / (norms + eps), norms


def l2_normalize_backward(dout: np.ndarray, out: np.ndarray, norms: np.ndarray,
                          eps: float = 1e-12) -> np.ndarray:
    """Exact Jacobian-vector product of ``u / (||u|| + eps)``.

    For ``y = u / (n + eps)`` with ``n = ||u||``:
    ``dy/du = I / (n + eps) - u u^T / (n (n + eps)^2)``.
    """
    denom = norms + eps
    u = out * denom
    safe = np.where(norms > 0, norms, 1.0)
    proj = np.sum(u * dout, axis=1, keepdims=True) / (safe * denom ** 2)
    return dout / denom - np.where(norms > 0, proj, 0.0) * u


def mse_loss(output: np.ndarray, target: np.ndarray) -> float:
    output, target = np.asarray(output, dtype=float), np.asarray(target, dtype=float)
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch {output.shape} vs {target.shape}")
    return float(np.mean((output - target) ** 2))


def mse_grad(output: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (output - target) / output.size
