"""Training loop, gradient checking, and their reports."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..metrics import MsSsimConfig
from ..radargram import Dataset
from .loss import loss_and_grad
from .model import CRNetModel
from .optim import Adam, TrainConfig, lr_at_epoch

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered; carries epoch, batch, and loss parts."""

    def __init__(self, epoch: int, batch: int, parts: dict):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}; parts: {parts}"
        )
        self.epoch = epoch
        self.batch = batch
        self.parts = parts


@dataclass
class TrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    steps: int = 0
    seconds: float = 0.0


def _stack_dataset(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    shapes = {p.raw.data.shape for p in dataset}
    if len(shapes) != 1:
        raise ValueError(f"pairs have mixed shapes: {sorted(shapes)}")
    x = np.stack([p.raw.data for p in dataset])[:, None, :, :]
    y = np.stack([p.clutter_free.data for p in dataset])[:, None, :, :]
    return x, y


def train(
    model: CRNetModel,
    dataset: Dataset,
    cfg: TrainConfig | None = None,
    msssim_cfg: MsSsimConfig | None = None,
) -> TrainResult:
    """Seeded mini-batch training; deterministic in single-threaded mode."""
    cfg = cfg or TrainConfig()
    x_all, y_all = _stack_dataset(dataset)
    x_all = x_all.astype(model.dtype)
    y_all = y_all.astype(model.dtype)
    h, w = x_all.shape[2], x_all.shape[3]
    if h % 16 or w % 16:
        raise ValueError(f"pair size {h}x{w} is not divisible by 16; resize the dataset")
    optimizer = Adam(model.params, cfg)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult()
    started = time.perf_counter()
    n = x_all.shape[0]
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(epoch, cfg)
        order = rng.permutation(n)
        epoch_losses = []
        for batch_idx, start in enumerate(range(0, n, cfg.batch_size)):
            sel = order[start : start + cfg.batch_size]
            pred, caches = model.forward(x_all[sel], train=True, want_cache=True)
            loss, dpred, parts = loss_and_grad(pred, y_all[sel], cfg.loss, msssim_cfg)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, batch_idx, parts)
            grads = model.backward(dpred, caches)
            optimizer.step(model.params, grads, lr)
            epoch_losses.append(loss)
            result.step_losses.append(loss)
            result.steps += 1
            if cfg.max_steps is not None and result.steps >= cfg.max_steps:
                break
        result.epoch_losses.append(float(np.mean(epoch_losses)))
        if cfg.max_steps is not None and result.steps >= cfg.max_steps:
            break
    result.seconds = time.perf_counter() - started
    log.info(
        "trained %d steps in %.1fs; loss %.4f -> %.4f",
        result.steps, result.seconds, result.epoch_losses[0], result.epoch_losses[-1],
    )
    return result


@dataclass
class GradientCheckReport:
    max_rel_error: float
    worst_group: str
    per_group: dict[str, float]
    step: float

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error <= tolerance


def gradient_check(
    model: CRNetModel,
    input_shape: tuple = (1, 1, 16, 16),
    samples_per_group: int = 3,
    step: float = 1e-5,
    seed: int = 0,
    loss_variant: str = "combined",
) -> GradientCheckReport:
    """Central finite differences vs. analytic gradients, in float64.

    Every parameter group is probed at a few random entries; the report holds
    the per-group and overall maximum relative error. Parameters are jittered
    first so the check runs at a generic point: at exact zero-init values the
    batch-norm + ReLU composition sits on its kink, where one-sided finite
    differences and the subgradient legitimately differ.
    """
    m64 = model.astype(np.float64)
    rng = np.random.default_rng(seed)
    for arr in m64.params.values():
        arr += 0.05 * rng.standard_normal(arr.shape)
    x = rng.random(input_shape)
    target = rng.random(input_shape)
    msssim_cfg = MsSsimConfig() if min(input_shape[2:]) >= 11 else MsSsimConfig(window_size=7)

    def loss_of_params() -> float:
        out = m64.forward(x, train=True)
        value, _, _ = loss_and_grad(out, target, loss_variant, msssim_cfg)
        return value

    pred, caches = m64.forward(x, train=True, want_cache=True)
    _, dpred, _ = loss_and_grad(pred, target, loss_variant, msssim_cfg)
    grads = m64.backward(dpred, caches)

    per_group: dict[str, float] = {}
    for name, arr in m64.params.items():
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        worst = 0.0
        count = min(samples_per_group, flat.size)
        for idx in rng.choice(flat.size, size=count, replace=False):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_of_params()
            flat[idx] = orig - step
            down = loss_of_params()
            flat[idx] = orig
            fd = (up - down) / (2 * step)
            rel = abs(gflat[idx] - fd) / max(abs(gflat[idx]) + abs(fd), 1e-6)
            worst = max(worst, rel)
        per_group[name] = worst
    worst_group = max(per_group, key=per_group.get)
    return GradientCheckReport(
        max_rel_error=per_group[worst_group],
        worst_group=worst_group,
        per_group=per_group,
        step=step,
    )
