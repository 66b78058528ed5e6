"""Operational semantics for the instruction subset.

:func:`step` is pure: it copies the state, applies one instruction and returns
the new state together with an :class:`EffectRecord` holding every value the
instruction read or wrote.  :func:`execute` is the in-place variant used by
the tracer's inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import isa
from .isa import MASK64, SIGN64

FLAG_NAMES = ("ZF", "SF", "CF", "OF")
WORD = 8


class ExecutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Stub:
    """External procedure summary applied atomically by ``call``.

    ``fn(state, accesses)`` reads argument registers from ``state``, writes
    its results into ``state`` and appends any memory it touches to
    ``accesses`` as :class:`MemoryAccess` entries.
    """

    name: str
    fn: object


@dataclass(frozen=True)
class MemoryAccess:
    address: int
    width: int
    kind: str  # "r" or "w"
    value: int
    implicit: bool = False

    @property
    def end(self) -> int:
        return self.address + self.width


@dataclass(frozen=True)
class OperandValue:
    token: str
    before: int
    after: int


@dataclass
class EffectRecord:
    address: int
    mnemonic: str
    operands: list  # OperandValue per value-bearing token, in token order
    memory: list  # MemoryAccess
    implicit: list = field(default_factory=list)  # OperandValue, token prefixed "%"
    reg_writes: dict = field(default_factory=dict)
    flags: tuple = (False, False, False, False)
    rip: int = 0
    flipped: bool = False


@dataclass
class MachineState:
    registers: dict = field(default_factory=lambda: {r: 0 for r in isa.REGISTERS})
    flags: dict = field(default_factory=lambda: {f: False for f in FLAG_NAMES})
    memory: dict = field(default_factory=dict)  # address -> nonzero byte
    alloc_count: int = 0
    stubs: dict = field(default_factory=dict, compare=False, repr=False)

    def copy(self) -> "MachineState":
        return MachineState(
            dict(self.registers), dict(self.flags), dict(self.memory), self.alloc_count, self.stubs
        )

    def read(self, address: int, width: int = WORD) -> int:
        mem = self.memory
        value = 0
        for i in range(width):
            value |= mem.get((address + i) & MASK64, 0) << (8 * i)
        return value

    def write(self, address: int, width: int, value: int) -> None:
        mem = self.memory
        for i in range(width):
            byte = (value >> (8 * i)) & 0xFF
            a = (address + i) & MASK64
            if byte:
                mem[a] = byte
            else:
                mem.pop(a, None)


def flags_bits(flags) -> int:
    return sum(1 << i for i, name in enumerate(FLAG_NAMES) if flags[name])


def effective_address(state: MachineState, op, next_rip: int) -> int:
    regs = state.registers
    addr = op.disp
    if op.base == "rip":
        addr += next_rip
    elif op.base is not None:
        addr += regs[op.base]
    if op.index is not None:
        addr += regs[op.index] * op.scale
    return addr & MASK64


def _set_arith(flags, a: int, b: int, result: int, subtract: bool) -> None:
    flags["ZF"] = result == 0
    flags["SF"] = bool(result & SIGN64)
    sa, sb, sr = a & SIGN64, b & SIGN64, result & SIGN64
    if subtract:
        flags["CF"] = a < b
        flags["OF"] = sa != sb and sr != sa
    else:
        flags["CF"] = a + b > MASK64
        flags["OF"] = sa == sb and sr != sa


def _set_logic(flags, result: int) -> None:
    flags["ZF"] = result == 0
    flags["SF"] = bool(result & SIGN64)
    flags["CF"] = False
    flags["OF"] = False


def _value_tokens(ins) -> list:
    """(token, register-or-None, operand index) for each value-bearing token."""
    out = []
    for i, op in enumerate(ins.operands):
        if op.kind == "reg":
            out.append((op.reg, op.reg, i))
        elif op.kind == "imm":
            out.append(("const", None, i))
        else:
            if op.base is not None:
                out.append((op.base, op.base, -1))
            if op.index is not None:
                out.append((op.index, op.index, -1))
    return out


def execute(state: MachineState, ins) -> EffectRecord:
    """Apply ``ins`` to ``state`` in place and return its effect record."""
    regs = state.registers
    flags = state.flags
    before = dict(regs)
    flags_before = flags_bits(flags)
    alloc_before = state.alloc_count
    next_rip = ins.next_address
    accesses = []
    m = ins.mnemonic
    ops = ins.operands

    def load(op, width=WORD, record=True):
        if op.kind == "reg":
            return regs[op.reg]
        if op.kind == "imm":
            return op.value
        addr = effective_address(state, op, next_rip)
        value = state.read(addr, width)
        if record:
            accesses.append(MemoryAccess(addr, width, "r", value))
        return value

    def store(op, value):
        value &= MASK64
        if op.kind == "reg":
            regs[op.reg] = value
        else:
            addr = effective_address(state, op, next_rip)
            state.write(addr, WORD, value)
            accesses.append(MemoryAccess(addr, WORD, "w", value))

    def push(value):
        rsp = (regs["rsp"] - WORD) & MASK64
        regs["rsp"] = rsp
        state.write(rsp, WORD, value)
        accesses.append(MemoryAccess(rsp, WORD, "w", value & MASK64, implicit=True))

    def pop():
        rsp = regs["rsp"]
        value = state.read(rsp, WORD)
        accesses.append(MemoryAccess(rsp, WORD, "r", value, implicit=True))
        regs["rsp"] = (rsp + WORD) & MASK64
        return value

    rip = next_rip
    if m == "mov":
        store(ops[0], load(ops[1]))
    elif m == "movsxd":
        raw = load(ops[1], width=4) & 0xFFFFFFFF
        store(ops[0], raw - (1 << 32) if raw & 0x80000000 else raw)
    elif m == "lea":
        store(ops[0], effective_address(state, ops[1], next_rip))
    elif m in ("add", "sub", "cmp", "xor", "and", "or", "test"):
        dst, src = ops
        b = load(src)
        a = load(dst, record=(dst.kind != "mem" or m in ("cmp", "test")))
        if m in ("add",):
            r = (a + b) & MASK64
            _set_arith(flags, a, b, r, subtract=False)
        elif m in ("sub", "cmp"):
            r = (a - b) & MASK64
            _set_arith(flags, a, b, r, subtract=True)
        elif m in ("xor",):
            r = a ^ b
            _set_logic(flags, r)
        elif m in ("and", "test"):
            r = a & b
            _set_logic(flags, r)
        else:
            r = a | b
            _set_logic(flags, r)
        if m not in ("cmp", "test"):
            store(dst, r)
    elif m in ("inc", "dec", "neg"):
        (dst,) = ops
        a = load(dst, record=dst.kind != "mem")
        if m == "inc":
            r = (a + 1) & MASK64
            _set_arith(flags, a, 1, r, subtract=False)
        elif m == "dec":
            r = (a - 1) & MASK64
            _set_arith(flags, a, 1, r, subtract=True)
        else:
            r = (-a) & MASK64
            _set_arith(flags, 0, a, r, subtract=True)
        store(dst, r)
    elif m == "push":
        push(load(ops[0]))
    elif m == "pop":
        value = pop()
        store(ops[0], value)
    elif m == "call":
        target = load(ops[0])
        stub = state.stubs.get(target)
        if stub is not None:
            stub.fn(state, accesses)
        else:
            push(next_rip)
            rip = target
    elif m == "ret":
        rip = pop()
    elif m == "jmp":
        rip = load(ops[0])
    elif m in isa.CONDITIONAL_JUMPS:
        if isa.condition_holds(m, flags):
            rip = load(ops[0])
    elif m == "nop":
        pass
    else:  # pragma: no cover - parser rejects unknown mnemonics
        raise ExecutionError(f"unsupported mnemonic {m}")
    regs["rip"] = rip & MASK64

    dest = ops[0].reg if (m in isa.WRITES_FIRST and ops and ops[0].kind == "reg") else None
    values = []
    seen_dest = False
    for token, reg, idx in _value_tokens(ins):
        if reg is None:
            v = ops[idx].value
            values.append(OperandValue(token, v, v))
        elif reg == "rip":
            values.append(OperandValue(token, next_rip, next_rip))
        elif idx == 0 and reg == dest and not seen_dest:
            seen_dest = True
            values.append(OperandValue(token, before[reg], regs[reg]))
        else:
            values.append(OperandValue(token, before[reg], before[reg]))

    writes = {r: v for r, v in regs.items() if r != "rip" and v != before[r]}
    implicit = [OperandValue("%" + r, before[r], v) for r, v in writes.items() if r != dest]
    flags_after = flags_bits(flags)
    if flags_after != flags_before:
        implicit.append(OperandValue("%flags", flags_before, flags_after))
    if state.alloc_count != alloc_before:
        implicit.append(OperandValue("%alloc", alloc_before, state.alloc_count))
    if m in isa.CONTROL_FLOW:
        implicit.append(OperandValue("%rip", ins.address, regs["rip"]))
    return EffectRecord(
        address=ins.address,
        mnemonic=m,
        operands=values,
        memory=accesses,
        implicit=implicit,
        reg_writes=writes,
        flags=tuple(flags[f] for f in FLAG_NAMES),
        rip=regs["rip"],
    )


def step(state: MachineState, ins):
    """Pure single step: returns ``(new_state, effect_record)``."""
    new = state.copy()
    record = execute(new, ins)
    return new, record


def replay(state: MachineState, records) -> MachineState:
    """Re-apply recorded effects (register writes, stores, flags, rip)."""
    out = state.copy()
    for rec in records:
        out.registers.update(rec.reg_writes)
        for acc in rec.memory:
            if acc.kind == "w":
                out.write(acc.address, acc.width, acc.value)
        out.flags.update(zip(FLAG_NAMES, rec.flags))
        out.registers["rip"] = rec.rip
        for v in rec.implicit:
            if v.token == "%alloc":
                out.alloc_count = v.after
    return out
