from __future__ import annotations

from dataclasses import replace

import numpy as np

from .vocab import MASK_ID

MODES = ("interpret", "synthesize", "both")


def mask_count(rate: float, maskable: int) -> int:
    """floor(rate * maskable), tolerant of binary rounding just under an integer."""
    return int(np.floor(rate * maskable + 1e-9))


def curriculum_rate(k: int, epochs: int, lower: float = 0.2, upper: float = 0.8) -> float:
    """Mask rate at 1-based epoch ``k``: lower + (upper - lower)(k - 1)/epochs."""
    if not 1 <= k <= epochs:
        raise ValueError(f"epoch {k} outside 1..{epochs}")
    if not 0.0 <= lower <= upper <= 1.0:
        raise ValueError("need 0 <= lower <= upper <= 1")
    return lower + (upper - lower) * (k - 1) / epochs


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def mask_sample(sample, rate: float, mode: str = "both", rng=None):
    """Return a masked copy of ``sample``; the input is left untouched.

    ``interpret`` masks trace rows only, ``synthesize`` code ids only and
    ``both`` masks each stream separately at ``rate``.  Dummy and padding
    positions are never chosen.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    rng = _rng(rng)
    base = unmask(sample) if len(sample.mi) or len(sample.mt) else sample
    out = base.copy()
    mi = mt = np.zeros(0, dtype=np.int64)
    if mode in ("synthesize", "both"):
        pool = base.maskable_code()
        mi = np.sort(rng.choice(pool, size=mask_count(rate, len(pool)), replace=False))
    if mode in ("interpret", "both"):
        pool = base.maskable_trace()
        mt = np.sort(rng.choice(pool, size=mask_count(rate, len(pool)), replace=False))
    mi, mt = mi.astype(np.int64), mt.astype(np.int64)
    out.code_targets = base.ids[mi].copy()
    out.trace_targets = base.trace[mt].copy()
    out.ids[mi] = MASK_ID
    out.trace[mt] = 0.0
    out.mi, out.mt = mi, mt
    return out


def unmask(sample):
    out = sample.copy()
    out.ids[sample.mi] = sample.code_targets
    out.trace[sample.mt] = sample.trace_targets
    empty = np.zeros(0, dtype=np.int64)
    return replace(out, mi=empty, mt=empty, code_targets=empty, trace_targets=np.zeros((0, 8)))
