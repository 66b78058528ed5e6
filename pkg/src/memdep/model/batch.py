from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoding.values import DUMMY
from ..encoding.vocab import PAD_ID

# per-token value source
VALUE, DUMMY_ROW, MASKED = 0, 1, 2


@dataclass
class Batch:
    """Right-padded stack of samples plus flattened mask coordinates."""

    ids: np.ndarray  # (b, n)
    positions: np.ndarray
    memflags: np.ndarray
    trace: np.ndarray  # (b, n, 8)
    addr: np.ndarray
    trace_kind: np.ndarray  # (b, n) VALUE / DUMMY_ROW / MASKED
    pad: np.ndarray  # (b, n) bool
    mi: tuple  # (batch index, token index) arrays
    mt: tuple
    code_targets: np.ndarray
    trace_targets: np.ndarray

    @property
    def size(self) -> int:
        return self.ids.shape[0]

    @property
    def length(self) -> int:
        return self.ids.shape[1]


def collate(samples, max_len: int | None = None) -> Batch:
    if not samples:
        raise ValueError("cannot collate an empty batch")
    n = max(len(s) for s in samples)
    if max_len is not None and n > max_len:
        raise ValueError(f"sequence length {n} exceeds the maximum {max_len}")
    b = len(samples)
    ids = np.full((b, n), PAD_ID, dtype=np.int64)
    positions = np.zeros((b, n), dtype=np.int64)
    memflags = np.zeros((b, n), dtype=np.int64)
    trace = np.full((b, n, 8), DUMMY, dtype=np.float64)
    addr = np.zeros((b, n, 8))
    kind = np.full((b, n), DUMMY_ROW, dtype=np.int64)
    mi_b, mi_t, mt_b, mt_t, ctar, ttar = [], [], [], [], [], []
    for k, s in enumerate(samples):
        m = len(s)
        ids[k, :m] = s.ids
        positions[k, :m] = s.positions
        memflags[k, :m] = s.memflags
        trace[k, :m] = s.trace
        addr[k, :m] = s.addr
        kind[k, :m] = np.where(s.dummy, DUMMY_ROW, VALUE)
        kind[k, s.mt] = MASKED
        kind[k, m:] = DUMMY_ROW
        kind[k, :m][s.padding] = DUMMY_ROW
        mi_b.append(np.full(len(s.mi), k))
        mi_t.append(s.mi)
        mt_b.append(np.full(len(s.mt), k))
        mt_t.append(s.mt)
        ctar.append(s.code_targets)
        ttar.append(np.asarray(s.trace_targets).reshape(-1, 8))
    pad = ids == PAD_ID
    cat = lambda parts: np.concatenate(parts).astype(np.int64)
    return Batch(
        ids=ids,
        positions=positions,
        memflags=memflags,
        trace=trace,
        addr=addr,
        trace_kind=kind,
        pad=pad,
        mi=(cat(mi_b), cat(mi_t)),
        mt=(cat(mt_b), cat(mt_t)),
        code_targets=cat(ctar),
        trace_targets=np.concatenate(ttar),
    )
