"""Process image setup: memory layout, external stubs, snapshots, regions."""

from __future__ import annotations

from dataclasses import dataclass

from ..asm.isa import MASK64
from ..asm.machine import MachineState, MemoryAccess, Stub

STACK_BASE = 0x7FFF0000
STACK_SIZE = 0x10000  # 64 KiB
INITIAL_RSP = STACK_BASE - 0x100
HEAP_BASE = 0x10000000
HEAP_STRIDE = 0x100
HEAP_SLOTS = 0x1000
HEAP_END = HEAP_BASE + HEAP_STRIDE * HEAP_SLOTS
MEMSET_LIMIT = 0x1000

REGIONS = ("stack", "heap", "global", "other")


class LayoutError(ValueError):
    pass


def _alloc(state: MachineState, size: int) -> int:
    slots = max(1, -(-size // HEAP_STRIDE))
    k = state.alloc_count
    if k + slots > HEAP_SLOTS:
        return 0
    state.alloc_count = k + slots
    return HEAP_BASE + k * HEAP_STRIDE


def _malloc(state, accesses):
    state.registers["rax"] = _alloc(state, state.registers["rdi"])


def _calloc(state, accesses):
    regs = state.registers
    size = (regs["rdi"] * regs["rsi"]) & MASK64
    ptr = _alloc(state, size)
    if ptr:
        size = min(size, MEMSET_LIMIT)
        if size:
            state.write(ptr, size, 0)
            accesses.append(MemoryAccess(ptr, size, "w", 0))
    regs["rax"] = ptr


def _free(state, accesses):
    state.registers["rax"] = 0


def _memset(state, accesses):
    regs = state.registers
    ptr, byte, size = regs["rdi"], regs["rsi"] & 0xFF, min(regs["rdx"], MEMSET_LIMIT)
    if size:
        value = int.from_bytes(bytes([byte]) * size, "little")
        state.write(ptr, size, value)
        accesses.append(MemoryAccess(ptr, size, "w", value))
    regs["rax"] = ptr


def _opaque(state, accesses):
    state.registers["rax"] = 0


STUB_SUMMARIES = {
    "malloc": _malloc,
    "calloc": _calloc,
    "free": _free,
    "memset": _memset,
}


@dataclass(frozen=True)
class Snapshot:
    state: MachineState

    def restore(self) -> MachineState:
        return self.state.copy()


@dataclass(frozen=True)
class RegionMap:
    data: tuple = ()

    def region_of(self, address: int) -> str:
        if STACK_BASE - STACK_SIZE <= address <= STACK_BASE:
            return "stack"
        if HEAP_BASE <= address < HEAP_END:
            return "heap"
        for start, size in self.data:
            if start <= address < start + size:
                return "global"
        return "other"


def region_map(program) -> RegionMap:
    return RegionMap(tuple(program.data))


def register_stubs(program) -> dict:
    return {
        addr: Stub(name, STUB_SUMMARIES.get(name, _opaque)) for name, addr in program.externs.items()
    }


def check_layout(program) -> None:
    spans = sorted((fn.entry, fn.end, fn.name) for fn in program.functions)
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise LayoutError(f"functions {n0} and {n1} overlap")
    for fn in program.functions:
        for a, b in zip(fn.instructions, fn.instructions[1:]):
            if b.address < a.address + a.length and b.address >= a.address:
                raise LayoutError(f"overlapping instructions in {fn.name} at {hex(b.address)}")


def initialize_environment(program, seed: int = 0):
    """Lay out ``program`` and snapshot the initialised image.

    Code is kept as an address-indexed instruction map (it is never read as
    data), declared globals are zero-filled, stubs are bound to their extern
    addresses.  ``seed`` is accepted for interface symmetry; initialisation
    itself is deterministic.
    """
    check_layout(program)
    state = MachineState(stubs=register_stubs(program))
    for start, size in program.data:
        state.write(start, size, 0)
    state.registers["rsp"] = INITIAL_RSP
    return state, Snapshot(state.copy())
