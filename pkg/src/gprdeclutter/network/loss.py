"""Differentiable training objectives on (N, 1, H, W) batches.

The MS-SSIM term reuses the windowed metric pipeline and its exact gradient;
MAE/MSE gradients are closed-form. Every variant returns the scalar loss and
dLoss/dprediction in one call.
"""

from __future__ import annotations

import numpy as np

from ..metrics import LOSS_VARIANTS, MsSsimConfig, msssim_batch


def loss_and_grad(
    pred: np.ndarray,
    target: np.ndarray,
    variant: str = "combined",
    msssim_cfg: MsSsimConfig | None = None,
) -> tuple[float, np.ndarray, dict]:
    """Scalar loss, gradient w.r.t. pred, and a dict of the loss parts."""
    if variant not in LOSS_VARIANTS:
        raise ValueError(f"unknown loss variant {variant!r}; expected one of {LOSS_VARIANTS}")
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    size = diff.size
    parts: dict[str, float] = {}
    loss = 0.0
    grad = np.zeros_like(diff)

    if variant in ("mae", "combined"):
        parts["mae"] = float(np.mean(np.abs(diff)))
        loss += parts["mae"]
        grad += np.sign(diff) / size
    if variant == "mse":
        parts["mse"] = float(np.mean(diff**2))
        loss += parts["mse"]
        grad += 2.0 * diff / size
    if variant in ("msssim", "combined"):
        n, c = pred.shape[0], pred.shape[1]
        go = np.full((n, c), -1.0 / (n * c))
        values, dvalues = msssim_batch(
            pred.astype(np.float64), target.astype(np.float64), msssim_cfg, grad_output=go
        )
        parts["msssim"] = float(values.mean())
        loss += 1.0 - parts["msssim"]
        grad += dvalues
    return loss, grad, parts
