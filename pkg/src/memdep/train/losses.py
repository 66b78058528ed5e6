from __future__ import annotations

from ..autodiff import Tensor, bce_with_logits, cross_entropy, scale, squared_error

ALPHA = 100.0


def pretrain_loss(code_logits, code_targets, trace_pred, trace_targets, alpha: float = ALPHA) -> Tensor:
    """Summed cross-entropy over masked code plus alpha times summed squared value error."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return cross_entropy(code_logits, code_targets) + scale(squared_error(trace_pred, trace_targets), alpha)


def dependency_loss(logits, labels) -> Tensor:
    """Mean binary cross-entropy over scored pairs."""
    return bce_with_logits(logits, labels)
