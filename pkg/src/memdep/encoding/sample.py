from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .tokenize import CodeTokens, tokenize
from .values import DUMMY, encode_addresses, encode_trace
from .vocab import PAD_ID

MAX_LEN = 512
STRIDE = 256


@dataclass
class Sample:
    """Aligned code, trace and address channels for one instruction run.

    ``trace`` rows hold eight normalised bytes, ``DUMMY`` (-1) for tokens that
    carry no value, or all ones for tokens of unexecuted instructions.  After
    masking, ``mi``/``mt`` hold the masked code/trace positions and the
    ``*_targets`` arrays hold the original contents.
    """

    ids: np.ndarray
    positions: np.ndarray
    memflags: np.ndarray
    trace: np.ndarray
    addr: np.ndarray
    labels: dict = field(default_factory=dict)
    mi: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    mt: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    code_targets: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    trace_targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 8)))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def instr(self) -> np.ndarray:
        """Instruction index of every token (positions restart at 1)."""
        return np.cumsum(self.positions == 1) - 1

    @property
    def dummy(self) -> np.ndarray:
        return self.trace[:, 0] == DUMMY

    @property
    def padding(self) -> np.ndarray:
        return self.ids == PAD_ID

    @property
    def trace_masked(self) -> np.ndarray:
        flags = np.zeros(len(self), dtype=bool)
        flags[self.mt] = True
        return flags

    def maskable_code(self) -> np.ndarray:
        return np.flatnonzero(~self.padding)

    def maskable_trace(self) -> np.ndarray:
        return np.flatnonzero(~self.dummy & ~self.padding)

    def anchors(self) -> np.ndarray:
        """Token index of each instruction's mnemonic."""
        return np.flatnonzero(self.positions == 1)

    def copy(self) -> "Sample":
        return replace(
            self,
            ids=self.ids.copy(),
            trace=self.trace.copy(),
            labels=dict(self.labels),
        )

    def same_inputs(self, other: "Sample") -> bool:
        return (
            np.array_equal(self.ids, other.ids)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.memflags, other.memflags)
            and np.array_equal(self.trace, other.trace)
            and np.array_equal(self.addr, other.addr)
        )


def build_sample(instructions, records=(), vocab=None, destination="output", labels=None) -> Sample:
    tokens = tokenize(instructions, vocab)
    return from_tokens(instructions, tokens, records, destination, labels)


def from_tokens(instructions, tokens: CodeTokens, records=(), destination="output", labels=None) -> Sample:
    return Sample(
        ids=tokens.ids,
        positions=tokens.positions,
        memflags=tokens.memflags,
        trace=encode_trace(instructions, tokens, records, destination),
        addr=encode_addresses(instructions, tokens),
        labels=dict(labels or {}),
    )


def windows(tokens_per_instruction, max_len: int = MAX_LEN, stride: int = STRIDE) -> list:
    """Instruction ranges ``(start, stop)`` covering the sequence in windows.

    Windows hold whole instructions, at most ``max_len`` tokens each; each
    next window starts at the first instruction at least ``stride`` tokens
    after the previous start.
    """
    counts = list(tokens_per_instruction)
    if any(c > max_len for c in counts):
        raise ValueError("an instruction is longer than the window")
    starts = np.concatenate([[0], np.cumsum(counts)])
    n = len(counts)
    out = []
    i = 0
    while i < n:
        j = i
        while j < n and starts[j + 1] - starts[i] <= max_len:
            j += 1
        out.append((i, j))
        if j == n:
            break
        nxt = int(np.searchsorted(starts, starts[i] + stride, side="left"))
        i = max(min(nxt, j), i + 1)
    return out


def order_by_length(samples) -> list:
    """Stable ascending sort by token count."""
    return sorted(samples, key=len)
