from __future__ import annotations

from dataclasses import dataclass, field

from .isa import MASK64, to_signed


@dataclass(frozen=True)
class Operand:
    """One instruction operand.

    ``kind`` is ``"reg"``, ``"imm"`` or ``"mem"``.  Memory operands resolve to
    ``base + index*scale + disp`` (mod 2**64); a ``rip`` base is resolved
    against the address of the next instruction.
    """

    kind: str
    reg: str | None = None
    value: int = 0
    base: str | None = None
    index: str | None = None
    scale: int = 1
    disp: int = 0
    label: str | None = None

    @classmethod
    def register(cls, name: str) -> "Operand":
        return cls("reg", reg=name)

    @classmethod
    def immediate(cls, value: int, label: str | None = None) -> "Operand":
        return cls("imm", value=value & MASK64, label=label)

    @classmethod
    def memory(cls, base=None, index=None, disp=0, scale=1) -> "Operand":
        return cls("mem", base=base, index=index, scale=scale, disp=disp & MASK64)

    @property
    def rip_relative(self) -> bool:
        return self.kind == "mem" and self.base == "rip"

    def __str__(self) -> str:
        if self.kind == "reg":
            return self.reg
        if self.kind == "imm":
            return self.label if self.label else _hex(self.value)
        parts = []
        if self.base:
            parts.append(self.base)
        if self.index:
            parts.append(self.index if self.scale == 1 else f"{self.index}*{self.scale}")
        text = "+".join(parts)
        disp = to_signed(self.disp)
        if disp or not parts:
            if not parts:
                text = _hex(self.disp)
            elif disp < 0:
                text += "-" + hex(-disp)
            else:
                text += "+" + hex(disp)
        return f"[{text}]"


def _hex(value: int) -> str:
    signed = to_signed(value)
    return hex(signed) if signed < 0 else hex(value)


@dataclass(frozen=True)
class Instruction:
    address: int
    mnemonic: str
    operands: tuple = ()
    length: int = 1
    line: int = 0

    @property
    def next_address(self) -> int:
        return (self.address + self.length) & MASK64

    def with_mnemonic(self, mnemonic: str) -> "Instruction":
        return Instruction(self.address, mnemonic, self.operands, self.length, self.line)

    def memory_operand(self) -> Operand | None:
        for op in self.operands:
            if op.kind == "mem":
                return op
        return None

    def __str__(self) -> str:
        if not self.operands:
            return self.mnemonic
        return f"{self.mnemonic} " + ",".join(str(op) for op in self.operands)


@dataclass
class Function:
    name: str
    instructions: list = field(default_factory=list)

    @property
    def entry(self) -> int:
        return self.instructions[0].address

    @property
    def end(self) -> int:
        last = self.instructions[-1]
        return last.address + last.length

    def at(self, address: int) -> Instruction | None:
        for ins in self.instructions:
            if ins.address == address:
                return ins
        return None

    def __len__(self) -> int:
        return len(self.instructions)


@dataclass
class Program:
    functions: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)
    externs: dict = field(default_factory=dict)  # name -> stub address
    data: list = field(default_factory=list)  # [(start, size)]

    def function(self, name: str) -> Function:
        for fn in self.functions:
            if fn.name == name:
                return fn
        raise KeyError(name)

    def instruction_map(self) -> dict:
        return {ins.address: ins for fn in self.functions for ins in fn.instructions}

    def function_at(self, address: int) -> Function | None:
        for fn in self.functions:
            if fn.entry == address:
                return fn
        return None

    def __len__(self) -> int:
        return len(self.functions)
