from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import f1_score


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass
class EvalReport:
    """Detect/miss/false-positive counts of a predicted pair set against a reference."""

    detect: int
    miss: int
    fp: int
    breakdown: dict = field(default_factory=dict)  # kind -> (detect, miss)

    @property
    def precision(self) -> float:
        return _ratio(self.detect, self.detect + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.detect, self.detect + self.miss)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_text(self) -> str:
        lines = [
            f"{'detect':<10}{'miss':<10}{'fp':<10}{'precision':<12}{'recall':<12}{'f1':<12}",
            f"{self.detect:<10}{self.miss:<10}{self.fp:<10}{self.precision:<12.6f}{self.recall:<12.6f}{self.f1:<12.6f}",
        ]
        for kind in sorted(self.breakdown):
            d, m = self.breakdown[kind]
            lines.append(f"{kind:<10}detect={d} miss={m}")
        return "\n".join(lines) + "\n"

    def to_records(self) -> str:
        rows = [{"scope": "all", "detect": self.detect, "miss": self.miss, "fp": self.fp,
                 "precision": round(self.precision, 6), "recall": round(self.recall, 6), "f1": round(self.f1, 6)}]
        for kind in sorted(self.breakdown):
            d, m = self.breakdown[kind]
            rows.append({"scope": kind, "detect": d, "miss": m})
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in rows)


def evaluate_dependencies(predicted, reference, kinds: dict | None = None) -> EvalReport:
    """Compare two sets of unordered pairs; ``kinds`` maps reference pairs to a label."""
    predicted, reference = set(predicted), set(reference)
    hit = predicted & reference
    breakdown = {}
    if kinds:
        for pair in reference:
            d, m = breakdown.get(kinds[pair], (0, 0))
            breakdown[kinds[pair]] = (d + 1, m) if pair in hit else (d, m + 1)
    return EvalReport(len(hit), len(reference - predicted), len(predicted - reference), breakdown)


def threshold_sweep(scores: dict, reference, thresholds=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)) -> list:
    """(threshold, detect, miss, fp) rows for pairs scored ``>= threshold``."""
    rows = []
    for t in thresholds:
        rep = evaluate_dependencies({p for p, s in scores.items() if s >= t}, reference)
        rows.append((t, rep.detect, rep.miss, rep.fp))
    return rows


def format_sweep(rows) -> str:
    return "".join(f"{t:.2f} {d} {m} {f}\n" for t, d, m, f in rows)


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    return float((y_true == y_pred).mean()) if len(y_true) else 0.0


def macro_f1(y_true, y_pred, labels=None) -> float:
    """Per-class F1 averaged over ``labels`` (default: classes present in either array)."""
    if labels is None:
        labels = sorted(set(np.asarray(y_true).tolist()) | set(np.asarray(y_pred).tolist()))
    return float(f1_score(y_true, y_pred, labels=list(labels), average="macro", zero_division=0))
