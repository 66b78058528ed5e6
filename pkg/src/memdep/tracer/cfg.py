from __future__ import annotations

from dataclasses import dataclass, field

from ..asm import isa


@dataclass
class ControlFlowGraph:
    """Basic blocks of one function, keyed by leader address."""

    entry: int
    blocks: dict = field(default_factory=dict)  # leader -> [Instruction]
    successors: dict = field(default_factory=dict)  # leader -> tuple of leaders
    block_of: dict = field(default_factory=dict)  # instruction address -> leader

    def reachable(self, start=None) -> set:
        start = self.entry if start is None else start
        seen, todo = set(), [start]
        while todo:
            b = todo.pop()
            if b in seen or b not in self.blocks:
                continue
            seen.add(b)
            todo.extend(self.successors.get(b, ()))
        return seen

    @property
    def conditionals(self) -> list:
        return [
            ins.address
            for block in self.blocks.values()
            for ins in block
            if isa.is_conditional(ins.mnemonic)
        ]


def _direct_target(ins):
    op = ins.operands[0] if ins.operands else None
    return op.value if op is not None and op.kind == "imm" else None


def build_cfg(function) -> ControlFlowGraph:
    """Leaders are the entry, in-function jump targets and jump fall-throughs."""
    instrs = function.instructions
    addresses = {ins.address for ins in instrs}
    leaders = {function.entry}
    for ins in instrs:
        m = ins.mnemonic
        if m == "jmp" or isa.is_conditional(m):
            target = _direct_target(ins)
            if target in addresses:
                leaders.add(target)
            if ins.next_address in addresses:
                leaders.add(ins.next_address)
        elif m == "ret" and ins.next_address in addresses:
            leaders.add(ins.next_address)

    cfg = ControlFlowGraph(entry=function.entry)
    current = None
    for ins in instrs:
        if ins.address in leaders:
            current = ins.address
            cfg.blocks[current] = []
        cfg.blocks[current].append(ins)
        cfg.block_of[ins.address] = current

    for leader, block in cfg.blocks.items():
        last = block[-1]
        m = last.mnemonic
        succ = []
        if m == "ret":
            pass
        elif m == "jmp":
            target = _direct_target(last)
            if target in addresses:
                succ.append(target)
        elif isa.is_conditional(m):
            target = _direct_target(last)
            if target in addresses:
                succ.append(target)
            if last.next_address in addresses and last.next_address not in succ:
                succ.append(last.next_address)
        elif last.next_address in addresses:
            succ.append(last.next_address)
        cfg.successors[leader] = tuple(succ)
    return cfg
