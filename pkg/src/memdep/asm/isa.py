"""Static facts about the supported x86-64 subset.

Everything here is table-driven: register names, mnemonic classes, the
condition-code truth tables and the fixed encoded-length model used when a
listing line carries no ``@len`` annotation.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
SIGN64 = 1 << 63

GPRS = (
    "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp",
    "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15",
)
REGISTERS = GPRS + ("rip",)
EXTENDED = frozenset(("r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15"))

# System V argument registers, used by stubs and the corpus generator.
ARG_REGS = ("rdi", "rsi", "rdx", "rcx", "r8", "r9")

CONDITIONAL_JUMPS = ("je", "jne", "jl", "jge", "jg", "jle", "jb", "jae")
ARITHMETIC = ("add", "sub", "cmp", "inc", "dec", "neg")
LOGICAL = ("xor", "and", "or", "test")

MNEMONICS = (
    "mov", "movsxd", "lea", "add", "sub", "xor", "and", "or", "cmp", "test",
    "push", "pop", "call", "ret", "jmp", *CONDITIONAL_JUMPS,
    "inc", "dec", "neg", "nop",
)

ARITY = {
    "mov": 2, "movsxd": 2, "lea": 2, "add": 2, "sub": 2, "xor": 2, "and": 2,
    "or": 2, "cmp": 2, "test": 2, "push": 1, "pop": 1, "call": 1, "ret": 0,
    "jmp": 1, "inc": 1, "dec": 1, "neg": 1, "nop": 0,
    **{j: 1 for j in CONDITIONAL_JUMPS},
}

# Mnemonics whose first operand is written.
WRITES_FIRST = frozenset(
    ("mov", "movsxd", "lea", "add", "sub", "xor", "and", "or", "pop", "inc", "dec", "neg")
)
# Mnemonics whose first operand is also read before being written.
READS_FIRST = frozenset(("add", "sub", "xor", "and", "or", "cmp", "test", "push", "inc", "dec", "neg"))

CONTROL_FLOW = frozenset(("call", "ret", "jmp", *CONDITIONAL_JUMPS))

_INVERSE = {
    "je": "jne", "jne": "je",
    "jl": "jge", "jge": "jl",
    "jg": "jle", "jle": "jg",
    "jb": "jae", "jae": "jb",
}


def is_conditional(mnemonic: str) -> bool:
    return mnemonic in _INVERSE


def invert_condition(mnemonic: str) -> str:
    """Return the conditional jump taken exactly when ``mnemonic`` is not."""
    try:
        return _INVERSE[mnemonic]
    except KeyError:
        raise ValueError(f"{mnemonic!r} is not a conditional jump") from None


def condition_holds(mnemonic: str, flags) -> bool:
    """Evaluate a conditional jump against a flag mapping with ZF/SF/CF/OF."""
    zf, sf, cf, of = flags["ZF"], flags["SF"], flags["CF"], flags["OF"]
    if mnemonic == "je":
        return zf
    if mnemonic == "jne":
        return not zf
    if mnemonic == "jl":
        return sf != of
    if mnemonic == "jge":
        return sf == of
    if mnemonic == "jg":
        return (not zf) and sf == of
    if mnemonic == "jle":
        return zf or sf != of
    if mnemonic == "jb":
        return cf
    if mnemonic == "jae":
        return not cf
    raise ValueError(f"{mnemonic!r} is not a conditional jump")


def to_signed(value: int) -> int:
    value &= MASK64
    return value - (1 << 64) if value & SIGN64 else value


def fits_int8(value: int) -> bool:
    return -128 <= to_signed(value) <= 127


def fits_int32(value: int) -> bool:
    return -(1 << 31) <= to_signed(value) < (1 << 31)


# --- encoded length model -------------------------------------------------
#
# opcode(1) + [REX(1)] + [ModRM(1)] + [SIB(1)] + disp + imm.  REX is only
# charged for movsxd and for r8..r15, which reproduces the byte deltas of the
# 32-bit-operand listings the model is trained on (push rbp = 1 byte,
# cmp [rip+d],2 = 7, movsxd rax,[rip+d] = 7, mov [rip+d],1 = 10).


def _memory_bytes(op) -> int:
    if op.rip_relative or op.base is None:
        return 4 + (1 if op.base is None and not op.rip_relative else 0)
    n = 0
    if op.index is not None or op.base in ("rsp", "r12"):
        n += 1
    if op.disp == 0 and op.base not in ("rbp", "r13"):
        return n
    return n + (1 if fits_int8(op.disp) else 4)


def _uses_extended(operands) -> bool:
    for op in operands:
        if op.kind == "reg" and op.reg in EXTENDED:
            return True
        if op.kind == "mem" and (op.base in EXTENDED or op.index in EXTENDED):
            return True
    return False


def encoded_length(mnemonic: str, operands) -> int:
    """Byte length of an instruction under the documented length model."""
    rex = 1 if (mnemonic == "movsxd" or _uses_extended(operands)) else 0
    if mnemonic in ("ret", "nop"):
        return 1
    if mnemonic in ("push", "pop"):
        (op,) = operands
        if op.kind == "reg":
            return 1 + rex
        if op.kind == "imm":
            return 2 if fits_int8(op.value) else 5
        return 2 + rex + _memory_bytes(op)
    if mnemonic in ("jmp", "call") or mnemonic in _INVERSE:
        (op,) = operands
        if op.kind == "imm":
            return 6 if mnemonic in _INVERSE else 5
        if op.kind == "reg":
            return 2 + rex
        return 2 + rex + _memory_bytes(op)
    if mnemonic in ("inc", "dec", "neg"):
        (op,) = operands
        return 2 + rex + (_memory_bytes(op) if op.kind == "mem" else 0)
    dst, src = operands
    n = 2 + rex
    for op in (dst, src):
        if op.kind == "mem":
            n += _memory_bytes(op)
    if src.kind == "imm":
        if mnemonic == "mov":
            if dst.kind == "reg" and not fits_int32(src.value):
                n += 8
            else:
                n += 4
        else:
            n += 1 if fits_int8(src.value) else 4
    return n
