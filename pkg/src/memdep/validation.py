"""Argument checks shared by the estimator wrappers and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

from .encoding.sample import Sample


def check_samples(samples, *, require_labels=(), name: str = "samples") -> list:
    """A non-empty list of well-formed samples, optionally carrying given label keys."""
    if isinstance(samples, Sample):
        samples = [samples]
    samples = list(samples)
    if not samples:
        raise ValueError(f"{name} is empty")
    for k, s in enumerate(samples):
        if not isinstance(s, Sample):
            raise TypeError(f"{name}[{k}] is {type(s).__name__}, not Sample")
        n = len(s.ids)
        if not (len(s.positions) == len(s.memflags) == n) or s.trace.shape != (n, 8) or s.addr.shape != (n, 8):
            raise ValueError(f"{name}[{k}] has misaligned channels")
        missing = [key for key in require_labels if key not in s.labels]
        if missing:
            raise ValueError(f"{name}[{k}] lacks labels {missing}")
    return samples


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_fraction(value, name: str, *, closed: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    ok = 0.0 <= value <= 1.0 if closed else 0.0 < value < 1.0
    if not ok:
        raise ValueError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}, got {value}")
    return float(value)


def check_positive(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_choice(value, choices, name: str):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_is_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(f"{type(estimator).__name__} is not fitted; call fit first")
