"""Classical clutter removal: mean subtraction, SVD, and RPCA.

All three operate on the raw amplitude grid of a radargram and return a
radargram of the same shape containing the estimated target response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .radargram import Radargram


@dataclass(frozen=True)
class RpcaResult:
    """Low-rank + sparse split of a B-scan matrix.

    objective_history holds ||L||_* + lam * ||S||_1 per outer iteration and
    residual_history the matching ||M - L - S||_F / ||M||_F, for convergence
    monitoring. The objective grows while the iterates are still infeasible
    (L + S far from M) and decreases once the residual is small.
    """

    low_rank: np.ndarray
    sparse: np.ndarray
    iterations: int
    residual: float
    converged: bool
    objective_history: tuple[float, ...] = ()
    residual_history: tuple[float, ...] = ()


def mean_subtraction(r: Radargram, col_start: int = 1, col_end: int | None = None) -> Radargram:
    """Subtract the per-row mean trace of columns col_start..col_end (1-based).

    The window defaults to all columns; the averaged trace is removed from
    every trace, not just the windowed ones.
    """
    if col_end is None:
        col_end = r.width
    if not 1 <= col_start <= col_end <= r.width:
        raise ValueError(
            f"window [{col_start}, {col_end}] invalid for width {r.width}"
        )
    mean_trace = r.data[:, col_start - 1 : col_end].mean(axis=1, keepdims=True)
    return r.with_data(r.data - mean_trace, label=f"meansub {r.label}")


def svd_removal(r: Radargram, k: int = 1) -> Radargram:
    """Remove the k dominant singular components of the B-scan matrix."""
    if not 1 <= k <= min(r.height, r.width):
        raise ValueError(f"k={k} out of range for {r.height}x{r.width} scan")
    u, s, vt = np.linalg.svd(r.data, full_matrices=False)
    cleaned = r.data - (u[:, :k] * s[:k]) @ vt[:k, :]
    return r.with_data(cleaned, label=f"svd{k} {r.label}")


def _soft_threshold(x: np.ndarray, tau: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def _svd_threshold(x: np.ndarray, tau: float) -> np.ndarray:
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep, :]


def rpca_decompose(
    r: Radargram | np.ndarray,
    lam: float = 3e-2,
    tol: float = 1e-7,
    max_iter: int = 1000,
) -> RpcaResult:
    """Split M into low-rank L plus sparse S by inexact augmented Lagrangian.

    Minimizes ||L||_* + lam * ||S||_1 subject to L + S = M with alternating
    singular-value / soft thresholding, multiplier update, and mu <- rho * mu
    (mu0 = 1.25 / ||M||_2, rho = 1.5). Stops when ||M - L - S||_F / ||M||_F
    drops below tol; hitting max_iter returns the best iterate flagged
    non-converged rather than raising.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    m = r.data if isinstance(r, Radargram) else np.asarray(r, dtype=np.float64)
    norm_f = np.linalg.norm(m)
    if norm_f == 0:
        zero = np.zeros_like(m)
        return RpcaResult(
            low_rank=zero, sparse=zero.copy(), iterations=1, residual=0.0,
            converged=True, objective_history=(0.0,), residual_history=(0.0,),
        )
    mu = 1.25 / np.linalg.norm(m, ord=2)
    rho = 1.5
    low = np.zeros_like(m)
    sparse = np.zeros_like(m)
    dual = np.zeros_like(m)
    objective: list[float] = []
    residuals: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        low = _svd_threshold(m - sparse + dual / mu, 1.0 / mu)
        sparse = _soft_threshold(m - low + dual / mu, lam / mu)
        gap = m - low - sparse
        dual += mu * gap
        mu *= rho
        residuals.append(float(np.linalg.norm(gap) / norm_f))
        objective.append(
            float(np.linalg.norm(low, ord="nuc") + lam * np.abs(sparse).sum())
        )
        if residuals[-1] < tol:
            converged = True
            break
    return RpcaResult(
        low_rank=low, sparse=sparse, iterations=it, residual=residuals[-1],
        converged=converged, objective_history=tuple(objective),
        residual_history=tuple(residuals),
    )


def rpca_removal(
    r: Radargram, lam: float = 3e-2, tol: float = 1e-7, max_iter: int = 1000
) -> Radargram:
    """Clutter-removed scan: the sparse part of the RPCA split."""
    result = rpca_decompose(r, lam=lam, tol=tol, max_iter=max_iter)
    return r.with_data(result.sparse, label=f"rpca {r.label}")
