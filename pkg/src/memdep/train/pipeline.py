from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .data import function_samples
from .finetune import score_windows

log = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    scores: dict = field(default_factory=dict)  # (a, b) -> probability
    threshold: float = 0.5
    notes: list = field(default_factory=list)

    @property
    def predicted(self) -> set:
        return {p for p, s in self.scores.items() if s >= self.threshold}


def predict_pipeline(model, program, threshold: float = 0.5, vocab=None, functions=None) -> PipelineResult:
    """Score every candidate memory pair of each function from code alone.

    Long functions are windowed; a pair is scored in the first window that
    holds both instructions, and pairs never sharing a window stay unscored.
    """
    result = PipelineResult(threshold=threshold)
    names = set(functions) if functions is not None else None
    samples = []
    for fn in program.functions:
        if names is not None and fn.name not in names:
            continue
        parts = function_samples(fn, vocab=vocab, max_len=model.config.max_len)
        if len(parts) > 1:
            result.notes.append(f"{fn.name}: {len(parts)} windows")
            log.info("%s split into %d windows", fn.name, len(parts))
        samples.extend(parts)
    for sample, scores in zip(samples, score_windows(model, samples)):
        addrs = sample.labels["addresses"]
        for (i, j), p in scores.items():
            result.scores.setdefault((addrs[i], addrs[j]), p)
    return result
