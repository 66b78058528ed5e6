from __future__ import annotations

import numpy as np


def relative_error(a, b) -> float:
    """||a - b|| / max(||a||, ||b||), with 0 when both vanish."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom < 1e-12 else float(np.linalg.norm(a - b) / denom)


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f()
        flat[i] = old - eps
        lo = f()
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def check_gradients(loss_fn, tensors, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and numeric gradients over ``tensors``."""
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    for t, g in zip(tensors, analytic):
        numeric = numeric_gradient(lambda: float(loss_fn().data), t.data, eps)
        worst = max(worst, relative_error(g, numeric))
    return worst
