"""Detection-training loss functions with analytic gradients.

Pure float64 implementations of the cross-entropy, Dice, combined, smooth-L1
and focal losses used for segmentation/box heads, plus a finite-difference
gradient checker. The smooth-L1 form is kept literal to its source: the
branch switches at MAE < 1 while the quadratic branch is scaled by delta, so
the function is continuous only for delta = 1 (the default). Probabilities
are clamped at 1e-12 before any log.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

P_EPS = 1e-12


@dataclass(frozen=True)
class RegressionParams:
    """Box-head hyper-parameters: smooth-L1 delta, focal alpha/gamma."""

    delta: float = 1.0
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


def _check_pair(p: Sequence[float], y: Sequence[float], soft: bool) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.ndim != 1 or y.ndim != 1:
        raise ValueError("p and y must be 1-D vectors")
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: p has {p.size}, y has {y.size}")
    if p.size < 1:
        raise ValueError("vectors must have length >= 1")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p entries must lie in [0, 1]")
    if soft:
        if np.any(y < 0) or np.any(y > 1):
            raise ValueError("y entries must lie in [0, 1]")
    elif not np.all((y == 0) | (y == 1)):
        raise ValueError("y entries must be 0 or 1")
    return p, y


def cross_entropy(p: Sequence[float], y: Sequence[float]) -> float:
    """Categorical cross-entropy: -sum(y_i * log p_i)."""
    p, y = _check_pair(p, y, soft=False)
    return float(-np.sum(y * np.log(np.maximum(p, P_EPS))))


def cross_entropy_grad(p: Sequence[float], y: Sequence[float]) -> np.ndarray:
    """d/dp_i of cross_entropy: -y_i / p_i."""
    p, y = _check_pair(p, y, soft=False)
    return -y / np.maximum(p, P_EPS)


def dice_loss(y: Sequence[float], p: Sequence[float]) -> float:
    """Dice loss: 1 - 2*sum(y_i p_i) / (sum y_i^2 + sum p_i^2).

    Soft masks allowed on both sides; symmetric in (y, p). The all-zero pair
    is defined as loss 0 (empty prediction of an empty mask is correct).
    """
    p, y = _check_pair(p, y, soft=True)
    denom = float(np.sum(y * y) + np.sum(p * p))
    if denom == 0.0:
        return 0.0
    return 1.0 - 2.0 * float(np.sum(y * p)) / denom


def dice_loss_grad(y: Sequence[float], p: Sequence[float]) -> np.ndarray:
    """d/dp_i of dice_loss at fixed y."""
    p, y = _check_pair(p, y, soft=True)
    s = float(np.sum(y * p))
    denom = float(np.sum(y * y) + np.sum(p * p))
    if denom == 0.0:
        return np.zeros_like(p)
    return (-2.0 * y * denom + 4.0 * s * p) / (denom * denom)


def dual_loss(p: Sequence[float], y: Sequence[float]) -> float:
    """Combined segmentation loss: cross_entropy + dice_loss."""
    return cross_entropy(p, y) + dice_loss(y, p)


def dual_loss_grad(p: Sequence[float], y: Sequence[float]) -> np.ndarray:
    return cross_entropy_grad(p, y) + dice_loss_grad(y, p)


def smooth_l1(mae: float, delta: float = 1.0) -> float:
    """Smooth-L1 on a nonnegative mean absolute error.

    Literal form: 0.5*mae^2/delta when mae < 1, else mae - 0.5*delta.
    Continuous at mae = 1 only when delta = 1; other deltas are allowed but
    introduce a jump there.
    """
    if mae < 0:
        raise ValueError("mae must be >= 0")
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if mae < 1.0:
        return 0.5 * mae * mae / delta
    return mae - 0.5 * delta


def smooth_l1_grad(mae: float, delta: float = 1.0) -> float:
    """d/dmae of smooth_l1 (undefined exactly at the mae = 1 branch point)."""
    if mae < 0:
        raise ValueError("mae must be >= 0")
    if mae < 1.0:
        return mae / delta
    return 1.0


def focal_loss(p: float, y: int, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Binary focal loss for a scalar probability.

    y = 1: -alpha * (1-p)^gamma * log(p)
    y = 0: -(1-alpha) * p^gamma * log(1-p)
    """
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    p = min(max(float(p), P_EPS), 1.0 - P_EPS)
    if y == 1:
        return float(-alpha * (1.0 - p) ** gamma * np.log(p))
    return float(-(1.0 - alpha) * p**gamma * np.log(1.0 - p))


def focal_loss_grad(p: float, y: int, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """d/dp of focal_loss."""
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    p = min(max(float(p), P_EPS), 1.0 - P_EPS)
    if y == 1:
        # d/dp [-a(1-p)^g log p] = a*g*(1-p)^(g-1)*log(p) - a*(1-p)^g/p
        term = -alpha * (1.0 - p) ** gamma / p
        if gamma > 0:
            term += alpha * gamma * (1.0 - p) ** (gamma - 1.0) * np.log(p)
        return float(term)
    # d/dp [-(1-a) p^g log(1-p)] = -(1-a)*g*p^(g-1)*log(1-p) + (1-a)*p^g/(1-p)
    term = (1.0 - alpha) * p**gamma / (1.0 - p)
    if gamma > 0:
        term += -(1.0 - alpha) * gamma * p ** (gamma - 1.0) * np.log(1.0 - p)
    return float(term)


def check_gradient(
    fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    point: Sequence[float],
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central finite differences.

    The point must sit at least ~10*step away from domain boundaries and
    branch points; the caller is responsible for choosing interior points.
    Components where both gradients vanish are counted as exact.
    """
    point = np.asarray(point, dtype=np.float64)
    analytic = np.asarray(grad_fn(point), dtype=np.float64)
    fd = np.empty_like(analytic)
    for i in range(point.size):
        hi = point.copy()
        lo = point.copy()
        hi[i] += step
        lo[i] -= step
        fd[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    scale = np.maximum(np.abs(analytic), np.abs(fd))
    err = np.zeros_like(scale)
    nonzero = scale > 1e-12
    err[nonzero] = np.abs(analytic - fd)[nonzero] / scale[nonzero]
    return float(err.max()) if err.size else 0.0


def gradient_selftest(points_per_loss: int = 200, seed: int = 20240301) -> list[tuple[str, float, bool]]:
    """Run the gradient suite at random interior points.

    Returns (name, max relative error, passed) per loss, using tolerance
    1e-5. Probability extremes and the smooth-L1 branch point are excluded
    by sampling well inside the domains.
    """
    rng = np.random.default_rng(seed)
    tol = 1e-5
    results: list[tuple[str, float, bool]] = []

    worst = 0.0
    for _ in range(points_per_loss):
        n = int(rng.integers(2, 9))
        y = (rng.random(n) < 0.5).astype(np.float64)
        p = rng.uniform(0.05, 0.95, size=n)
        err = check_gradient(
            lambda v: cross_entropy(v, y), lambda v: cross_entropy_grad(v, y), p
        )
        worst = max(worst, err)
    results.append(("cross_entropy", worst, worst < tol))

    worst = 0.0
    for _ in range(points_per_loss):
        n = int(rng.integers(2, 9))
        y = rng.uniform(0.05, 0.95, size=n)
        p = rng.uniform(0.05, 0.95, size=n)
        err = check_gradient(
            lambda v: dice_loss(y, v), lambda v: dice_loss_grad(y, v), p
        )
        worst = max(worst, err)
    results.append(("dice_loss", worst, worst < tol))

    worst = 0.0
    for _ in range(points_per_loss):
        n = int(rng.integers(2, 9))
        y = (rng.random(n) < 0.5).astype(np.float64)
        p = rng.uniform(0.05, 0.95, size=n)
        err = check_gradient(
            lambda v: dual_loss(v, y), lambda v: dual_loss_grad(v, y), p
        )
        worst = max(worst, err)
    results.append(("dual_loss", worst, worst < tol))

    worst = 0.0
    for _ in range(points_per_loss):
        # interior of either branch, away from the mae = 1 boundary
        mae = float(rng.uniform(0.01, 0.9)) if rng.random() < 0.5 else float(rng.uniform(1.1, 4.0))
        delta = float(rng.uniform(0.5, 2.0))
        err = check_gradient(
            lambda v: smooth_l1(float(v[0]), delta),
            lambda v: np.array([smooth_l1_grad(float(v[0]), delta)]),
            [mae],
        )
        worst = max(worst, err)
    results.append(("smooth_l1", worst, worst < tol))

    worst = 0.0
    for _ in range(points_per_loss):
        p = float(rng.uniform(0.05, 0.95))
        y = int(rng.integers(0, 2))
        alpha = float(rng.uniform(0.1, 0.9))
        gamma = float(rng.choice([0.0, 0.5, 1.0, 2.0, 3.0]))
        err = check_gradient(
            lambda v: focal_loss(float(v[0]), y, alpha, gamma),
            lambda v: np.array([focal_loss_grad(float(v[0]), y, alpha, gamma)]),
            [p],
        )
        worst = max(worst, err)
    results.append(("focal_loss", worst, worst < tol))

    return results
