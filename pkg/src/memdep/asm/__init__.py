"""x86-64 subset: listing parser and single-step semantics."""

from .isa import invert_condition, condition_holds, is_conditional
from .machine import (
    EffectRecord,
    MachineState,
    MemoryAccess,
    OperandValue,
    Stub,
    effective_address,
    execute,
    replay,
    step,
)
from .parser import AsmSyntaxError, format_program, parse_asm, parse_snippet
from .program import Function, Instruction, Operand, Program

__all__ = [
    "AsmSyntaxError",
    "EffectRecord",
    "Function",
    "Instruction",
    "MachineState",
    "MemoryAccess",
    "Operand",
    "OperandValue",
    "Program",
    "Stub",
    "condition_holds",
    "effective_address",
    "execute",
    "format_program",
    "invert_condition",
    "is_conditional",
    "parse_asm",
    "parse_snippet",
    "replay",
    "step",
]
