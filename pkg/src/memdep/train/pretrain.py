from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Adam
from ..encoding.masking import MODES, curriculum_rate, mask_count, mask_sample
from ..encoding.sample import order_by_length
from ..seeding import stream
from .losses import ALPHA, pretrain_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 10
    lower: float = 0.2
    upper: float = 0.8
    batch_size: int = 16
    lr: float = 1e-4
    alpha: float = ALPHA
    mode_mix: tuple = (1 / 3, 1 / 3, 1 / 3)  # interpret, synthesize, both

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if len(self.mode_mix) != 3 or min(self.mode_mix) < 0 or not np.isclose(sum(self.mode_mix), 1.0):
            raise ValueError("mode mix is three non-negative weights summing to 1")


@dataclass
class EpochAudit:
    """Masking counts realised in one epoch against floor(rate * maskable)."""

    epoch: int
    rate: float
    code_masked: int = 0
    code_maskable: int = 0
    trace_masked: int = 0
    trace_maskable: int = 0
    mismatches: int = 0

    @property
    def ok(self) -> bool:
        return self.mismatches == 0

    def line(self) -> str:
        return (
            f"epoch={self.epoch} rate={self.rate:.4f} code={self.code_masked}/{self.code_maskable} "
            f"trace={self.trace_masked}/{self.trace_maskable} mismatches={self.mismatches}"
        )


@dataclass
class PretrainResult:
    losses: list = field(default_factory=list)  # per step, batch-mean loss
    epoch_losses: list = field(default_factory=list)
    audit: list = field(default_factory=list)


def audit_masking(audit: EpochAudit, original, masked, mode: str) -> None:
    if mode in ("synthesize", "both"):
        pool = len(original.maskable_code())
        audit.code_maskable += pool
        audit.code_masked += len(masked.mi)
        audit.mismatches += len(masked.mi) != mask_count(audit.rate, pool)
    if mode in ("interpret", "both"):
        pool = len(original.maskable_trace())
        audit.trace_maskable += pool
        audit.trace_masked += len(masked.mt)
        audit.mismatches += len(masked.mt) != mask_count(audit.rate, pool)


def batch_loss(model, masked, alpha: float, training: bool = True, rng=None):
    code, values = model.forward_pretrain(masked, training=training, rng=rng)
    batch = model.batch(masked)
    loss = pretrain_loss(code, batch.code_targets, values, batch.trace_targets, alpha)
    return loss * (1.0 / len(masked))


def pretrain(model, samples, config: PretrainConfig | None = None, seed: int = 0, on_epoch=None) -> PretrainResult:
    """Masked pretraining with a growing mask rate.

    Every epoch walks the samples in ascending length, masks each batch at
    the epoch's rate under a mode drawn from ``mode_mix`` and takes one Adam
    step on the batch-mean loss.
    """
    config = config or PretrainConfig()
    samples = order_by_length(samples)
    if not samples:
        raise ValueError("empty pretraining corpus")
    mask_rng = stream(seed, "mask")
    mode_rng = stream(seed, "mode")
    drop_rng = stream(seed, "dropout")
    opt = Adam(list(model.parameters().values()), lr=config.lr)
    result = PretrainResult()
    for epoch in range(1, config.epochs + 1):
        rate = curriculum_rate(epoch, config.epochs, config.lower, config.upper)
        audit = EpochAudit(epoch, rate)
        total = 0.0
        for start in range(0, len(samples), config.batch_size):
            chunk = samples[start : start + config.batch_size]
            mode = MODES[mode_rng.choice(3, p=config.mode_mix)]
            masked = [mask_sample(s, rate, mode, mask_rng) for s in chunk]
            for s, m in zip(chunk, masked):
                audit_masking(audit, s, m, mode)
            opt.zero_grad()
            loss = batch_loss(model, masked, config.alpha, True, drop_rng)
            loss.backward()
            opt.step()
            result.losses.append(float(loss.data))
            total += float(loss.data) * len(chunk)
        result.epoch_losses.append(total / len(samples))
        result.audit.append(audit)
        log.info("%s loss=%.6f", audit.line(), result.epoch_losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, model, result)
    return result
