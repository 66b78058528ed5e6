"""Instruction sequences to (code id, position, memory flag) tuples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vocab import CONST, Vocabulary

# token kinds
MNEMONIC, REGISTER, IMMEDIATE, MEM_REGISTER, MEM_CONST = range(5)
VALUE_KINDS = (REGISTER, IMMEDIATE, MEM_REGISTER)


@dataclass
class CodeTokens:
    """Flat token arrays for a run of instructions.

    ``instr`` maps each token to its instruction's index and ``kind`` records
    what the token stands for; registers and standalone constants carry trace
    values, constants inside memory operands and mnemonics do not.
    """

    ids: np.ndarray
    positions: np.ndarray
    memflags: np.ndarray
    instr: np.ndarray
    kind: np.ndarray
    text: list

    def __len__(self) -> int:
        return len(self.ids)

    def starts(self) -> np.ndarray:
        return np.flatnonzero(self.positions == 1)


def instruction_tokens(ins) -> list:
    """(text, kind, memflag) per token of one instruction."""
    out = [(ins.mnemonic, MNEMONIC, 0)]
    for op in ins.operands:
        if op.kind == "reg":
            out.append((op.reg, REGISTER, 0))
        elif op.kind == "imm":
            out.append((CONST, IMMEDIATE, 0))
        else:
            if op.base is not None:
                out.append((op.base, MEM_REGISTER, 1))
            if op.index is not None:
                out.append((op.index, MEM_REGISTER, 1))
                if op.scale != 1:
                    out.append((CONST, MEM_CONST, 1))
            if op.disp or (op.base is None and op.index is None):
                out.append((CONST, MEM_CONST, 1))
    return out


def tokenize(instructions, vocab: Vocabulary | None = None) -> CodeTokens:
    vocab = vocab or Vocabulary()
    ids, pos, mem, instr, kind, text = [], [], [], [], [], []
    for k, ins in enumerate(instructions):
        for p, (tok, knd, m) in enumerate(instruction_tokens(ins), start=1):
            ids.append(vocab.id(tok))
            pos.append(p)
            mem.append(m)
            instr.append(k)
            kind.append(knd)
            text.append(tok)
    as_int = lambda xs: np.asarray(xs, dtype=np.int64)
    return CodeTokens(as_int(ids), as_int(pos), as_int(mem), as_int(instr), as_int(kind), text)
