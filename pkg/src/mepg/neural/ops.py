"""Array ops for the toy denoisers: 3x3 same-conv, 1x1 projections, tanh.

Everything is float64 and batched as [B, C, H, W]. Each forward has a
matching exact backward so analytic gradients can be checked against
central finite differences.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NonFiniteActivation, ShapeMismatch


def _windows3(x: np.ndarray, dilation: int = 1) -> np.ndarray:
    """3x3 tap neighborhoods (spacing = dilation) of a zero-padded map:
    [B,C,H,W] -> [B,C,H,W,3,3]."""
    d = dilation
    xp = np.pad(x, ((0, 0), (0, 0), (d, d), (d, d)))
    span = 2 * d + 1
    win = sliding_window_view(xp, (span, span), axis=(2, 3))
    return win[..., ::d, ::d]


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
           dilation: int = 1) -> np.ndarray:
    """Same-padding 3x3 convolution. x [B,C,H,W], w [F,C,3,3], b [F]."""
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv2d: input {x.shape} vs kernel {w.shape}")
    win = _windows3(x, dilation)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # [B,H,W,F]
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    y += b[None, :, None, None]
    return y


def conv2d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray,
                    dilation: int = 1):
    """Gradients of conv2d: returns (dw, db, dx)."""
    win = _windows3(x, dilation)
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))  # [F,C,3,3]
    db = dy.sum(axis=(0, 2, 3))
    wf = w[:, :, ::-1, ::-1]
    dyw = _windows3(dy, dilation)
    dx = np.tensordot(dyw, wf, axes=([1, 4, 5], [0, 2, 3]))  # [B,H,W,C]
    return dw, db, np.ascontiguousarray(dx.transpose(0, 3, 1, 2))


def pointwise(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel linear map (1x1 conv). x [B,F,H,W], w [O,F], b [O]."""
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"pointwise: input {x.shape} vs weights {w.shape}")
    y = np.tensordot(w, x, axes=([1], [1])).transpose(1, 0, 2, 3)  # [B,O,H,W]
    return y + b[None, :, None, None]


def pointwise_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Gradients of pointwise: returns (dw, db, dx)."""
    dw = np.tensordot(dy, x, axes=([0, 2, 3], [0, 2, 3]))  # [O,F]
    db = dy.sum(axis=(0, 2, 3))
    dx = np.tensordot(w, dy, axes=([0], [1])).transpose(1, 0, 2, 3)
    return dw, db, np.ascontiguousarray(dx)


def pool_spatial(x: np.ndarray) -> np.ndarray:
    """Average over the spatial axes: [B,F,H,W] -> [B,F]."""
    return x.mean(axis=(2, 3))


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(x).all():
        raise NonFiniteActivation(f"non-finite values in {where}")
    return x


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign for stability at large |z|.
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
