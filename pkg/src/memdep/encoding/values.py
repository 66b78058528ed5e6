"""Byte-level trace and address channels aligned to code tokens."""

from __future__ import annotations

import numpy as np

from ..asm.isa import MASK64
from .tokenize import VALUE_KINDS, CodeTokens

DUMMY = -1.0
SENTINEL = 1.0
NORMALIZER = 256.0
DESTINATIONS = ("output", "input")


class AlignmentError(ValueError):
    pass


def value_bytes(value: int) -> np.ndarray:
    """Eight normalised bytes, most significant first."""
    raw = (value & MASK64).to_bytes(8, "big")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / NORMALIZER


def bytes_value(row) -> int:
    return int.from_bytes(bytes(int(round(b * NORMALIZER)) for b in row), "big")


def first_executions(records) -> dict:
    """Address to its first effect record; later loop iterations are ignored."""
    first = {}
    for rec in records:
        first.setdefault(rec.address, rec)
    return first


def encode_trace(instructions, tokens: CodeTokens, records, destination: str = "output") -> np.ndarray:
    """(n, 8) trace channel: value bytes, ``DUMMY`` rows, or all-``SENTINEL`` rows.

    ``destination`` picks which value a written register token shows: the
    value after the instruction (``"output"``) or before it (``"input"``).
    """
    if destination not in DESTINATIONS:
        raise ValueError(f"destination must be one of {DESTINATIONS}")
    out = np.full((len(tokens), 8), DUMMY)
    executed = first_executions(records)
    value_slots = np.isin(tokens.kind, VALUE_KINDS)
    for k, ins in enumerate(instructions):
        slots = np.flatnonzero((tokens.instr == k) & value_slots)
        rec = executed.get(ins.address)
        if rec is None:
            out[slots] = SENTINEL
            continue
        if len(slots) != len(rec.operands):
            raise AlignmentError(
                f"{len(slots)} value tokens vs {len(rec.operands)} recorded values at {ins.address:#x}"
            )
        for slot, v in zip(slots, rec.operands):
            out[slot] = value_bytes(v.after if destination == "output" else v.before)
    return out


def encode_addresses(instructions, tokens: CodeTokens) -> np.ndarray:
    table = np.stack([value_bytes(ins.address) for ins in instructions]) if instructions else np.zeros((0, 8))
    return table[tokens.instr] if len(tokens) else np.zeros((0, 8))
