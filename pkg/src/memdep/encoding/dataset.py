"""Line-delimited sample files.

One JSON object per line with keys in this order: ``tokens``, ``positions``,
``memflags`` (0/1), ``trace`` (8 values per token, flattened; -1 marks a
dummy row), ``addr`` (8 values per token, flattened) and ``labels``.
"""

from __future__ import annotations

import json

import numpy as np

from .sample import Sample

FIELDS = ("tokens", "positions", "memflags", "trace", "addr", "labels")


def _floats(arr) -> list:
    return [float(x) for x in np.asarray(arr).reshape(-1)]


def sample_to_record(sample: Sample) -> dict:
    return {
        "tokens": [int(x) for x in sample.ids],
        "positions": [int(x) for x in sample.positions],
        "memflags": [int(x) for x in sample.memflags],
        "trace": _floats(sample.trace),
        "addr": _floats(sample.addr),
        "labels": sample.labels,
    }


def record_to_sample(record: dict) -> Sample:
    missing = [k for k in FIELDS if k not in record]
    if missing:
        raise ValueError(f"sample record lacks {missing}")
    n = len(record["tokens"])
    if not (len(record["positions"]) == len(record["memflags"]) == n):
        raise ValueError("code channels differ in length")
    if not (len(record["trace"]) == len(record["addr"]) == 8 * n):
        raise ValueError("value channels are not 8 bytes per token")
    as_int = lambda xs: np.asarray(xs, dtype=np.int64)
    return Sample(
        ids=as_int(record["tokens"]),
        positions=as_int(record["positions"]),
        memflags=as_int(record["memflags"]),
        trace=np.asarray(record["trace"], dtype=np.float64).reshape(n, 8),
        addr=np.asarray(record["addr"], dtype=np.float64).reshape(n, 8),
        labels=record["labels"],
    )


def dumps(sample: Sample) -> str:
    return json.dumps(sample_to_record(sample), separators=(",", ":"))


def write_samples(samples, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for s in samples:
            fh.write(dumps(s) + "\n")


def read_samples(path) -> list:
    out = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(record_to_sample(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    return out
