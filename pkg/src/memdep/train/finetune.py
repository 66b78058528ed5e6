from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..autodiff import Adam, no_grad
from ..seeding import stream
from .losses import dependency_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-4
    negative_ratio: int = 3
    threshold: float = 0.5


@dataclass
class FinetuneResult:
    losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


def candidate_pairs(sample) -> list:
    """All (i, j) instruction-index pairs of candidate memory instructions, i < j."""
    return list(combinations(sorted(sample.labels.get("memory", [])), 2))


def pair_anchors(sample) -> np.ndarray:
    """Token that stands for each instruction in a pair: its first memory-operand token, else its mnemonic."""
    starts = sample.anchors()
    out = starts.copy()
    instr = sample.instr
    for k in range(len(starts)):
        mem = np.flatnonzero((instr == k) & (sample.memflags == 1))
        if len(mem):
            out[k] = mem[0]
    return out


def labeled_pairs(sample, rng, negative_ratio: int = 3) -> np.ndarray:
    """(k, 3) rows of [anchor_i, anchor_j, label] for one window.

    Every dependent pair is kept; non-dependent candidate pairs are capped at
    ``negative_ratio`` times the positives by a seeded subsample.
    """
    positives = {tuple(p) for p in sample.labels.get("deps", [])}
    negatives = [p for p in candidate_pairs(sample) if p not in positives]
    cap = negative_ratio * len(positives)
    if len(negatives) > cap:
        keep = np.sort(rng.choice(len(negatives), size=cap, replace=False))
        negatives = [negatives[k] for k in keep]
    anchors = pair_anchors(sample)
    rows = [(anchors[i], anchors[j], 1) for i, j in sorted(positives)]
    rows += [(anchors[i], anchors[j], 0) for i, j in negatives]
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def _pair_logits(model, samples, pair_rows, training, rng):
    batch = model.batch(samples)
    hidden = model.encode(batch, "static", training, rng)
    rows = np.concatenate([np.full(len(p), k) for k, p in enumerate(pair_rows)])
    stacked = np.concatenate(pair_rows)
    return model.dependency_logits(hidden, batch.pad, rows, stacked[:, 0], stacked[:, 1]), stacked


def finetune_dependency(model, samples, config: FinetuneConfig | None = None, seed: int = 0) -> FinetuneResult:
    """Train encoder and dependency head on BCE over labelled pairs (static mode)."""
    config = config or FinetuneConfig()
    result = FinetuneResult()
    usable = []
    for s in samples:
        if len(candidate_pairs(s)) == 0:
            result.skipped.append(s.labels.get("function", "?"))
        else:
            usable.append(s)
    if result.skipped:
        warnings.warn(f"{len(result.skipped)} windows without memory pairs skipped")
    if not usable:
        raise ValueError("no memory-accessing pairs to finetune on")
    order_rng = stream(seed, "sampling")
    neg_rng = stream(seed, "negatives")
    drop_rng = stream(seed, "dropout")
    opt = Adam(list(model.parameters().values()), lr=config.lr)
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(usable))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            chunk = [usable[k] for k in order[start : start + config.batch_size]]
            pairs = [labeled_pairs(s, neg_rng, config.negative_ratio) for s in chunk]
            keep = [k for k, p in enumerate(pairs) if len(p)]
            if not keep:
                continue
            chunk, pairs = [chunk[k] for k in keep], [pairs[k] for k in keep]
            opt.zero_grad()
            logits, stacked = _pair_logits(model, chunk, pairs, True, drop_rng)
            loss = dependency_loss(logits, stacked[:, 2])
            loss.backward()
            opt.step()
            result.losses.append(float(loss.data))
            total += float(loss.data) * len(stacked)
            count += len(stacked)
        result.epoch_losses.append(total / max(count, 1))
        log.info("finetune epoch=%d loss=%.6f", epoch + 1, result.epoch_losses[-1])
    return result


def score_windows(model, samples, batch_size: int = 16) -> list:
    """Per window, a dict (i, j) -> probability over all candidate pairs."""
    out = []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            pair_lists = [candidate_pairs(s) for s in chunk]
            rows = []
            for s, pl in zip(chunk, pair_lists):
                anchors = pair_anchors(s)
                rows.append(np.array([(anchors[i], anchors[j]) for i, j in pl], dtype=np.int64).reshape(-1, 2))
            if sum(len(r) for r in rows) == 0:
                out.extend({} for _ in chunk)
                continue
            logits, _ = _pair_logits(model, chunk, rows, False, None)
            probs = 0.5 * (1.0 + np.tanh(0.5 * logits.data))
            offset = 0
            for pl in pair_lists:
                out.append({p: float(probs[offset + k]) for k, p in enumerate(pl)})
                offset += len(pl)
    return out
