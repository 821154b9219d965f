"""Differentiable 1-D network primitives with manual backward passes.

Conventions: sequence tensors are ``(batch, channels, time)``, dense tensors
``(batch, features)``. Convolution is cross-correlation with valid padding.
Every ``*_backward`` consumes the tensors its forward pass returned, so the
pairing is explicit and each primitive can be finite-difference checked in
isolation.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5
BCE_CLAMP = 1e-7


def conv1d_output_length(t: int, kernel_size: int, stride: int) -> int:
    if t < kernel_size:
        raise ValueError(
            f"input length {t} is shorter than the kernel size {kernel_size}"
        )
    return (t - kernel_size) // stride + 1


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """x: (N, C, T), w: (F, C, K), b: (F,) -> (N, F, T')."""
    n, c, t = x.shape
    f, c_w, k = w.shape
    if c != c_w:
        raise ValueError(f"input has {c} channels but kernel expects {c_w}")
    conv1d_output_length(t, k, stride)
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)[:, :, ::stride, :]
    return np.einsum("nctk,fck->nft", windows, w) + b[None, :, None]


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, stride: int, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, db)."""
    _, _, k = w.shape
    t_out = dout.shape[2]
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)[:, :, ::stride, :]
    dw = np.einsum("nft,nctk->fck", dout, windows)
    db = dout.sum(axis=(0, 2))
    dx = np.zeros_like(x)
    contrib = np.einsum("nft,fck->nckt", dout, w)
    for j in range(k):
        dx[:, :, j : j + stride * t_out : stride] += contrib[:, :, j, :]
    return dx, dw, db


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x: (N, F_in), w: (F_out, F_in), b: (F_out,)."""
    return x @ w.T + b


def dense_backward(
    x: np.ndarray, w: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return dout @ w, dout.T @ x, dout.sum(axis=0)


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
) -> tuple[np.ndarray, dict]:
    """Per-channel normalization over batch and time axes.

    In training mode, batch statistics are used and the running statistics
    are updated in place with the given momentum; in inference mode the
    running statistics are applied as a fixed affine transform. Returns the
    output and a cache for the backward pass.
    """
    if training:
        if x.shape[0] < 2:
            raise ValueError(
                "batch normalization in training mode needs a batch of at least 2"
            )
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
    out = gamma[None, :, None] * xhat + beta[None, :, None]
    cache = {"xhat": xhat, "inv_std": inv_std, "gamma": gamma, "training": training}
    return out, cache


def batchnorm_backward(
    dout: np.ndarray, cache: dict
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dgamma, dbeta)."""
    xhat = cache["xhat"]
    inv_std = cache["inv_std"]
    gamma = cache["gamma"]
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    if not cache["training"]:
        return dxhat * inv_std[None, :, None], dgamma, dbeta
    m = xhat.shape[0] * xhat.shape[2]
    sum_dxhat = dxhat.sum(axis=(0, 2))[None, :, None]
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    dx = (inv_std[None, :, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


def avgpool_forward(x: np.ndarray) -> np.ndarray:
    """Average pooling, size 2, stride 2; an odd trailing sample is dropped."""
    t_out = x.shape[2] // 2
    return 0.5 * (x[:, :, 0 : 2 * t_out : 2] + x[:, :, 1 : 2 * t_out : 2])


def avgpool_backward(x_shape: tuple, dout: np.ndarray) -> np.ndarray:
    dx = np.zeros(x_shape, dtype=dout.dtype)
    t_out = dout.shape[2]
    dx[:, :, 0 : 2 * t_out : 2] = 0.5 * dout
    dx[:, :, 1 : 2 * t_out : 2] = 0.5 * dout
    return dx


def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max pooling, size 2, stride 2. Returns (out, winner-is-second mask)."""
    t_out = x.shape[2] // 2
    a = x[:, :, 0 : 2 * t_out : 2]
    b = x[:, :, 1 : 2 * t_out : 2]
    second_wins = b > a
    return np.where(second_wins, b, a), second_wins


def maxpool_backward(x_shape: tuple, second_wins: np.ndarray, dout: np.ndarray) -> np.ndarray:
    dx = np.zeros(x_shape, dtype=dout.dtype)
    t_out = dout.shape[2]
    dx[:, :, 0 : 2 * t_out : 2] = np.where(second_wins, 0.0, dout)
    dx[:, :, 1 : 2 * t_out : 2] = np.where(second_wins, dout, 0.0)
    return dx


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # Keep the output strictly inside (0, 1) even where exp underflows.
    return np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def sigmoid_backward(out: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * out * (1.0 - out)


def dropout_forward(
    x: np.ndarray,
    rate: float,
    training: bool,
    rng: np.random.Generator | None = None,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout. A fixed ``mask`` may be supplied for gradient checks."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if mask is None:
        if rng is None:
            raise ValueError("dropout in training mode needs an rng or a fixed mask")
        mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(mask: np.ndarray | None, rate: float, dout: np.ndarray) -> np.ndarray:
    if mask is None:
        return dout
    return dout * mask / (1.0 - rate)


# ---------------------------------------------------------------------------
# Losses (mean over the batch)
# ---------------------------------------------------------------------------


def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    """Binary cross-entropy; probabilities are clamped away from {0, 1}."""
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_loss_grad(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return (-y / p + (1.0 - y) / (1.0 - p)) / p.shape[0]


def mse_loss(yhat: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((yhat - y) ** 2))


def mse_loss_grad(yhat: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 2.0 * (yhat - y) / yhat.shape[0]
