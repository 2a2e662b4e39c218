"""Full-reference metrics (MAE, MSE, PSNR, MS-SSIM), field metrics (SCR,
improvement factor), and the training-loss variants.

The MS-SSIM core works on batched (N, C, H, W) arrays and can return the
exact gradient of the windowed pipeline, which the network training loop
uses; single-scan metric wrappers accept radargrams or 2-D arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .radargram import Radargram

MS_SSIM_BASE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
LOSS_VARIANTS = ("combined", "mae", "mse", "msssim")


@dataclass(frozen=True)
class MsSsimConfig:
    """Multi-scale SSIM settings.

    scales=None picks the largest M <= 5 whose coarsest scale still fits the
    Gaussian window (M=3 for 256x64 inputs, M=5 once both dims reach 176).
    Per-scale exponents are the calibrated five-scale weights truncated to M
    and renormalized to sum to 1. windowed=False switches local Gaussian
    statistics to whole-image moments.
    """

    scales: int | None = None
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    windowed: bool = True

    def resolve_scales(self, height: int, width: int) -> int:
        max_m = _max_scales(height, width, self.window_size)
        if self.scales is None:
            if max_m < 1:
                raise ValueError(
                    f"image {height}x{width} is smaller than the {self.window_size}-tap "
                    f"window; maximum admissible scales: 0"
                )
            return min(max_m, len(MS_SSIM_BASE_WEIGHTS))
        if not 1 <= self.scales <= len(MS_SSIM_BASE_WEIGHTS):
            raise ValueError(f"scales must be in 1..{len(MS_SSIM_BASE_WEIGHTS)}")
        if self.scales > max_m:
            raise ValueError(
                f"window does not fit the coarsest of {self.scales} scales for "
                f"{height}x{width}; maximum admissible scales: {max_m}"
            )
        return self.scales

    def weights(self, m: int) -> np.ndarray:
        w = np.asarray(MS_SSIM_BASE_WEIGHTS[:m], dtype=np.float64)
        return w / w.sum()


def _max_scales(height: int, width: int, window: int) -> int:
    m = 0
    h, w = height, width
    while min(h, w) >= window and m < len(MS_SSIM_BASE_WEIGHTS):
        m += 1
        h //= 2
        w //= 2
    return m


@dataclass(frozen=True)
class TargetMask:
    """Boolean split of a scan into target region (True) and clutter region."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2:
            raise ValueError("mask must be 2-D")
        if not m.any() or m.all():
            raise ValueError("mask needs at least one target and one clutter pixel")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)


def _grid(x) -> np.ndarray:
    arr = x.data if isinstance(x, Radargram) else np.asarray(x, dtype=np.float64)
    return np.asarray(arr, dtype=np.float64)


def _paired_grids(y, gt) -> tuple[np.ndarray, np.ndarray]:
    a, b = _grid(y), _grid(gt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mae(y, gt) -> float:
    """Mean absolute error over all pixels."""
    a, b = _paired_grids(y, gt)
    return float(np.mean(np.abs(a - b)))


def mse(y, gt) -> float:
    """Mean squared error over all pixels."""
    a, b = _paired_grids(y, gt)
    return float(np.mean((a - b) ** 2))


def psnr(y, gt) -> float:
    """Peak SNR in dB for unit dynamic range; +inf when the scans match."""
    err = mse(y, gt)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


# ---------------------------------------------------------------------------
# MS-SSIM core (batched, differentiable)
# ---------------------------------------------------------------------------


def _gauss_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _corr1d_valid(x: np.ndarray, kern: np.ndarray, axis: int) -> np.ndarray:
    windows = sliding_window_view(x, len(kern), axis=axis)
    return windows @ kern


def _corr1d_valid_adjoint(grad: np.ndarray, kern: np.ndarray, axis: int) -> np.ndarray:
    # Adjoint of valid correlation: zero-pad by k-1 and correlate with the
    # reversed kernel.
    k = len(kern)
    pad = [(0, 0)] * grad.ndim
    pad[axis] = (k - 1, k - 1)
    return _corr1d_valid(np.pad(grad, pad), kern[::-1], axis)


def _window_filter(x: np.ndarray, kern: np.ndarray) -> np.ndarray:
    return _corr1d_valid(_corr1d_valid(x, kern, 2), kern, 3)


def _window_filter_adjoint(grad: np.ndarray, kern: np.ndarray) -> np.ndarray:
    return _corr1d_valid_adjoint(_corr1d_valid_adjoint(grad, kern, 3), kern, 2)


def _avgpool2(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    he, we = h - h % 2, w - w % 2
    x = x[:, :, :he, :we]
    return 0.25 * (
        x[:, :, 0::2, 0::2] + x[:, :, 0::2, 1::2] + x[:, :, 1::2, 0::2] + x[:, :, 1::2, 1::2]
    )


def _avgpool2_adjoint(grad: np.ndarray, in_shape: tuple) -> np.ndarray:
    out = np.zeros(in_shape, dtype=grad.dtype)
    h2, w2 = grad.shape[2], grad.shape[3]
    spread = 0.25 * grad
    out[:, :, 0 : 2 * h2 : 2, 0 : 2 * w2 : 2] += spread
    out[:, :, 0 : 2 * h2 : 2, 1 : 2 * w2 : 2] += spread
    out[:, :, 1 : 2 * h2 : 2, 0 : 2 * w2 : 2] += spread
    out[:, :, 1 : 2 * h2 : 2, 1 : 2 * w2 : 2] += spread
    return out


_CLAMP = 1e-12


def msssim_batch(
    y: np.ndarray,
    gt: np.ndarray,
    cfg: MsSsimConfig | None = None,
    grad_output: np.ndarray | None = None,
):
    """MS-SSIM per (sample, channel) for (N, C, H, W) batches.

    With grad_output (N, C) given, also returns d(sum(grad_output * values))
    / d y, differentiating the windowed pipeline exactly. Per-scale means of
    the contrast-structure map are clamped at a tiny positive floor before
    the exponentiation, which keeps fractional powers defined (gradient is
    zero on the clamped branch).
    """
    cfg = cfg or MsSsimConfig()
    if y.shape != gt.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {gt.shape}")
    if y.ndim != 4:
        raise ValueError("expected (N, C, H, W) input")
    m = cfg.resolve_scales(y.shape[2], y.shape[3])
    if not cfg.windowed:
        if grad_output is not None:
            raise ValueError("gradients are only available for the windowed variant")
        return _msssim_global(y, gt, cfg, m)
    weights = cfg.weights(m)
    kern = _gauss_kernel(cfg.window_size, cfg.window_sigma)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2

    yk = y.astype(np.float64, copy=True)
    gk = gt.astype(np.float64, copy=True)
    caches = []
    raw_stats = []  # per-scale mean statistic before clamping, (N, C)
    for k in range(m):
        mu_y = _window_filter(yk, kern)
        mu_g = _window_filter(gk, kern)
        a2 = _window_filter(yk * yk, kern)
        cc = _window_filter(yk * gk, kern)
        b2 = _window_filter(gk * gk, kern)
        vy = a2 - mu_y * mu_y
        vg = b2 - mu_g * mu_g
        cov = cc - mu_y * mu_g
        den = vy + vg + c2
        cs = (2.0 * cov + c2) / den
        npix = cs.shape[2] * cs.shape[3]
        if k < m - 1:
            stat = cs.mean(axis=(2, 3))
            cache = (yk, gk, mu_y, mu_g, den, cs, None, None, npix)
        else:
            denl = mu_y * mu_y + mu_g * mu_g + c1
            lum = (2.0 * mu_y * mu_g + c1) / denl
            stat = (lum * cs).mean(axis=(2, 3))
            cache = (yk, gk, mu_y, mu_g, den, cs, lum, denl, npix)
        raw_stats.append(stat)
        caches.append(cache)
        if k < m - 1:
            yk = _avgpool2(yk)
            gk = _avgpool2(gk)

    terms_arr = np.maximum(np.stack(raw_stats), _CLAMP)  # (m, N, C)
    values = np.prod(terms_arr ** weights[:, None, None], axis=0)
    if grad_output is None:
        return values

    go = np.asarray(grad_output, dtype=np.float64)
    # d value / d term_k = value * w_k / term_k; zero where the clamp bound.
    dterm = go[None] * values[None] * weights[:, None, None] / terms_arr  # (m,N,C)
    dterm[np.stack(raw_stats) < _CLAMP] = 0.0

    dy_next = None
    for k in range(m - 1, -1, -1):
        yk, gk, mu_y, mu_g, den, cs, lum, denl, npix = caches[k]
        d_stat = dterm[k][:, :, None, None] / npix
        if lum is None:
            dcs = d_stat
            dl = None
        else:
            dcs = d_stat * lum
            dl = d_stat * cs
        dcov = dcs * (2.0 / den)
        dvy = dcs * (-cs / den)
        dmu_y = dvy * (-2.0 * mu_y) + dcov * (-mu_g)
        if dl is not None:
            dmu_y = dmu_y + dl * (2.0 * mu_g - lum * 2.0 * mu_y) / denl
        dyk = (
            _window_filter_adjoint(dmu_y, kern)
            + 2.0 * yk * _window_filter_adjoint(dvy, kern)
            + gk * _window_filter_adjoint(dcov, kern)
        )
        if dy_next is not None:
            dyk = dyk + _avgpool2_adjoint(dy_next, yk.shape)
        dy_next = dyk
    return values, dy_next


def _msssim_global(y: np.ndarray, gt: np.ndarray, cfg: MsSsimConfig, m: int) -> np.ndarray:
    """Whole-image-moment MS-SSIM variant (evaluation only)."""
    weights = cfg.weights(m)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    c3 = c2 / 2.0
    yk = y.astype(np.float64, copy=True)
    gk = gt.astype(np.float64, copy=True)
    value = np.ones(y.shape[:2])
    for k in range(m):
        mu_y = yk.mean(axis=(2, 3))
        mu_g = gk.mean(axis=(2, 3))
        vy = np.maximum(yk.var(axis=(2, 3)), 0.0)
        vg = np.maximum(gk.var(axis=(2, 3)), 0.0)
        cov = (yk * gk).mean(axis=(2, 3)) - mu_y * mu_g
        sy, sg = np.sqrt(vy), np.sqrt(vg)
        contrast = (2.0 * sy * sg + c2) / (vy + vg + c2)
        structure = (cov + c3) / (sy * sg + c3)
        term = contrast * structure
        if k == m - 1:
            lum = (2.0 * mu_y * mu_g + c1) / (mu_y * mu_y + mu_g * mu_g + c1)
            term = term * lum
        value = value * np.sign(term) * np.abs(term) ** weights[k]
        if k < m - 1:
            yk = _avgpool2(yk)
            gk = _avgpool2(gk)
    return value


def ms_ssim(y, gt, cfg: MsSsimConfig | None = None) -> float:
    """MS-SSIM between two scans (Radargram or 2-D array)."""
    a, b = _paired_grids(y, gt)
    values = msssim_batch(a[None, None], b[None, None], cfg)
    return float(values[0, 0])


def loss_value(y, gt, variant: str = "combined", cfg: MsSsimConfig | None = None) -> float:
    """Scalar training-objective value for any of the loss variants."""
    if variant == "mae":
        return mae(y, gt)
    if variant == "mse":
        return mse(y, gt)
    if variant == "msssim":
        return 1.0 - ms_ssim(y, gt, cfg)
    if variant == "combined":
        return mae(y, gt) + 1.0 - ms_ssim(y, gt, cfg)
    raise ValueError(f"unknown loss variant {variant!r}; expected one of {LOSS_VARIANTS}")


def combined_loss(y, gt, cfg: MsSsimConfig | None = None) -> float:
    """MAE plus the MS-SSIM dissimilarity (1 - MS-SSIM)."""
    return loss_value(y, gt, "combined", cfg)


# ---------------------------------------------------------------------------
# Field metrics
# ---------------------------------------------------------------------------


def mask_from_ground_truth(gt, frac: float = 0.1) -> TargetMask:
    """Target mask: pixels whose |gt| reaches frac of the gt peak."""
    g = _grid(gt)
    peak = np.max(np.abs(g))
    if peak == 0:
        raise ValueError("ground truth is all zeros; no target region to mask")
    return TargetMask(np.abs(g) >= frac * peak)


def scr(r, mask: TargetMask) -> float:
    """Signal-to-clutter ratio: peak |amplitude| inside the mask over peak
    |amplitude| outside; +inf when the clutter region is exactly zero."""
    g = _grid(r)
    if g.shape != mask.mask.shape:
        raise ValueError(f"scan {g.shape} and mask {mask.mask.shape} differ")
    signal = float(np.max(np.abs(g[mask.mask])))
    clutter = float(np.max(np.abs(g[~mask.mask])))
    if clutter == 0:
        return math.inf
    return signal / clutter


def improvement_factor(raw, processed, mask: TargetMask) -> float:
    """SCR gain of processing in dB: 20 log10(SCR_processed / SCR_raw)."""
    scr_raw = scr(raw, mask)
    scr_proc = scr(processed, mask)
    if math.isinf(scr_proc) and math.isinf(scr_raw):
        return math.nan
    if math.isinf(scr_proc):
        return math.inf
    if math.isinf(scr_raw):
        return -math.inf
    if scr_proc == 0:
        return -math.inf
    if scr_raw == 0:
        return math.inf
    return 20.0 * math.log10(scr_proc / scr_raw)
