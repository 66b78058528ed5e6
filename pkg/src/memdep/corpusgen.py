"""Seeded synthetic programs with planted memory dependencies and signatures.

Dependency programs give every function a fixed set of memory cells, each
reachable only through one structurally recognisable addressing pattern:

* one stack slot, through ``[rbp-0x8]`` or the equivalent ``[rsp+0x38]``
  (``rbp`` holds the entry ``rsp``, there is no saved frame pointer);
* two heap objects from ``malloc``, held in ``rbx`` and ``r12`` at one
  fixed offset each;
* a rearranged view of one heap object: ``rcx`` copies its base in the
  prologue and ``rdx`` is rebuilt from zero before each ``[rcx+rdx]``;
* one global, addressed rip-relative;
* an outside pointer in ``rsi``.

Memory operations sit on the straight-line spine, so every run executes all
of them; branch diamonds and loops only touch data registers.  Two memory
operations depend exactly when they name the same cell and one writes.
Region labels come from tracing the program against the region map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asm import isa, parse_asm
from .asm.isa import MASK64
from .asm.parser import CODE_BASE
from .tracer.deps import DependencyRecord, kind_of
from .tracer.environment import region_map
from .tracer.forced import trace_program
from .train.matcher import ARG_SLOTS, SignatureRecord
from .model.network import RETURN_CLASSES, TYPE_CLASSES

DATA_BASE = 0x600000
FRAME = 0x40
OBJECT_SIZE = 0x20
DATA_REGS = ("rax", "rdi", "r8", "r9", "r10")
LOOP_REG = "r11"
ALIAS_PATTERNS = ("same-register", "rearranged-base", "rip-relative", "stack-slot")
CELL_REGION = {"stack": "stack", "heapA": "heap", "heapB": "heap", "global": "global", "other": "other"}


class GenSpecError(ValueError):
    pass


@dataclass(frozen=True)
class GenSpec:
    seed: int = 0
    functions: int = 20
    min_ops: int = 8
    max_ops: int = 24
    branch_density: float = 0.15
    memory_density: float = 0.5
    min_memory_ops: int = 2
    alias_mix: tuple = (0.35, 0.25, 0.2, 0.2)
    loops: bool = False

    def __post_init__(self):
        for name in ("branch_density", "memory_density"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise GenSpecError(f"{name} must lie in [0, 1]")
        if self.functions < 1 or not 1 <= self.min_ops <= self.max_ops:
            raise GenSpecError("need at least one function and 1 <= min_ops <= max_ops")
        if self.min_memory_ops > self.min_ops:
            raise GenSpecError(f"{self.min_memory_ops} memory operations do not fit in {self.min_ops} operations")
        if len(self.alias_mix) != len(ALIAS_PATTERNS) or min(self.alias_mix) < 0 or sum(self.alias_mix) <= 0:
            raise GenSpecError("alias mix needs four non-negative weights")


@dataclass
class Planted:
    line: int  # listing line of the instruction
    cell: str
    kind: str  # "r" or "w"


@dataclass
class GeneratedProgram:
    program: object
    text: str
    dependencies: set = field(default_factory=set)  # DependencyRecord
    regions: dict = field(default_factory=dict)  # address -> region
    signatures: dict = field(default_factory=dict)  # function -> SignatureRecord
    call_sites: dict = field(default_factory=dict)  # site address -> caller-side SignatureRecord
    call_graph: dict = field(default_factory=dict)  # site address -> callee name

    def function_dependencies(self, name: str) -> set:
        fn = self.program.function(name)
        return {d for d in self.dependencies if fn.entry <= d.a < fn.end}


class _Listing:
    """Lines plus the metadata needed to resolve rip-relative operands."""

    def __init__(self):
        self.lines = []
        self.rip_targets = {}  # line number -> absolute target
        self.planted = []

    def emit(self, text: str, rip_target: int | None = None, cell: str | None = None, kind: str | None = None) -> None:
        self.lines.append(text)
        if rip_target is not None:
            self.rip_targets[len(self.lines)] = rip_target
        if cell is not None:
            self.planted.append(Planted(len(self.lines), cell, kind))

    def text(self, displacements=None) -> str:
        out = []
        for lineno, line in enumerate(self.lines, start=1):
            if lineno in self.rip_targets:
                disp = (displacements or {}).get(lineno, 0)
                line = line.replace("RIP", f"rip+{disp:#x}" if disp >= 0 else f"rip-{-disp:#x}")
            out.append(line)
        return "\n".join(out) + "\n"


def _resolve(listing: _Listing):
    """Two-pass layout: rip-relative operands are fixed length, so addresses are stable."""
    first = parse_asm(listing.text())
    by_line = {ins.line: ins for fn in first.functions for ins in fn.instructions}
    disps = {ln: target - by_line[ln].next_address for ln, target in listing.rip_targets.items()}
    text = listing.text(disps)
    program = parse_asm(text)
    by_line = {ins.line: ins for fn in program.functions for ins in fn.instructions}
    for ln, target in listing.rip_targets.items():
        ins = by_line[ln]
        if (ins.memory_operand().disp + ins.next_address) & MASK64 != target:
            raise AssertionError(f"line {ln}: rip-relative operand does not reach {target:#x}")
    return program, text, by_line


# --- dependency programs ---------------------------------------------------


class _FunctionWriter:
    def __init__(self, listing: _Listing, rng, spec: GenSpec, name: str, global_addr: int, label_base: int):
        self.out = listing
        self.rng = rng
        self.spec = spec
        self.name = name
        self.global_addr = global_addr
        self.labels = label_base
        offsets = (0x0, 0x8, 0x10, 0x18)
        self.offset = {"heapA": int(rng.choice(offsets)), "heapB": int(rng.choice(offsets))}
        self.alias_of_rcx = "heapA" if rng.random() < 0.5 else "heapB"

    def _reg(self) -> str:
        return str(self.rng.choice(DATA_REGS))

    def _imm(self) -> str:
        return hex(int(self.rng.integers(0, 1 << 12)))

    def data_op(self) -> None:
        r = self.rng.random()
        mnem = str(self.rng.choice(("add", "sub", "xor", "and", "or", "mov")))
        if r < 0.5:
            self.out.emit(f"    {mnem} {self._reg()},{self._reg()}")
        else:
            self.out.emit(f"    {mnem} {self._reg()},{self._imm()}")

    def _operand(self, pattern: str):
        rng = self.rng
        if pattern == "same-register":
            cell = str(rng.choice(("heapA", "heapB", "other")))
            if cell == "other":
                return cell, "[rsi]", None
            base = "rbx" if cell == "heapA" else "r12"
            off = self.offset[cell]
            return cell, f"[{base}+{off:#x}]" if off else f"[{base}]", None
        if pattern == "rearranged-base":
            cell = self.alias_of_rcx
            self.out.emit("    xor rdx,rdx")
            self.out.emit(f"    add rdx,{self.offset[cell]:#x}")
            return cell, "[rcx+rdx]", None
        if pattern == "rip-relative":
            return "global", "[RIP]", self.global_addr
        form = "[rbp-0x8]" if rng.random() < 0.5 else f"[rsp+{FRAME - 8:#x}]"
        return "stack", form, None

    def memory_op(self) -> None:
        weights = np.asarray(self.spec.alias_mix, dtype=float)
        pattern = ALIAS_PATTERNS[self.rng.choice(len(ALIAS_PATTERNS), p=weights / weights.sum())]
        cell, operand, target = self._operand(pattern)
        r = self.rng.random()
        if r < 0.45:
            self.out.emit(f"    mov {self._reg()},{operand}", target, cell, "r")
        elif r < 0.8:
            self.out.emit(f"    mov {operand},{self._reg()}", target, cell, "w")
        else:
            mnem = str(self.rng.choice(("add", "sub", "xor", "and", "or")))
            self.out.emit(f"    {mnem} {operand},{self._reg()}", target, cell, "w")

    def _label(self, tag: str) -> str:
        self.labels += 1
        return f".{tag}{self.labels}"

    def diamond(self) -> None:
        rng = self.rng
        other, join = self._label("else"), self._label("join")
        self.out.emit(f"    cmp r8,{self._imm()}")
        self.out.emit(f"    {rng.choice(isa.CONDITIONAL_JUMPS)} {other}")
        for _ in range(int(rng.integers(1, 4))):
            self.data_op()
        self.out.emit(f"    jmp {join}")
        self.out.emit(f"{other}:")
        for _ in range(int(rng.integers(1, 4))):
            self.data_op()
        self.out.emit(f"{join}:")

    def loop(self) -> None:
        head = self._label("loop")
        self.out.emit(f"    mov {LOOP_REG},{int(self.rng.integers(1, 5))}")
        self.out.emit(f"{head}:")
        for _ in range(int(self.rng.integers(1, 3))):
            self.data_op()
        self.out.emit(f"    dec {LOOP_REG}")
        self.out.emit(f"    jne {head}")

    def write(self) -> None:
        rng, spec, out = self.rng, self.spec, self.out
        out.emit(f"{self.name}:")
        out.emit("    mov rbp,rsp")
        out.emit(f"    sub rsp,{FRAME:#x}")
        for reg in ("rbx", "r12"):
            out.emit(f"    mov rdi,{OBJECT_SIZE:#x}")
            out.emit("    call malloc")
            out.emit(f"    mov {reg},rax")
        out.emit(f"    mov rcx,{'rbx' if self.alias_of_rcx == 'heapA' else 'r12'}")
        n = int(rng.integers(spec.min_ops, spec.max_ops + 1))
        memory = rng.random(n) < spec.memory_density
        short = spec.min_memory_ops - int(memory.sum())
        if short > 0:
            memory[rng.choice(np.flatnonzero(~memory), size=short, replace=False)] = True
        for is_mem in memory:
            if is_mem:
                self.memory_op()
            elif rng.random() < spec.branch_density:
                self.diamond()
            elif spec.loops and rng.random() < spec.branch_density:
                self.loop()
            else:
                self.data_op()
        out.emit("    mov rsp,rbp")
        out.emit("    ret")


def _plant(planted, by_line) -> tuple:
    """Dependencies and regions implied by the cell of every memory operation."""
    deps, regions = set(), {}
    ordered = sorted(planted, key=lambda p: by_line[p.line].address)
    for k, later in enumerate(ordered):
        regions[by_line[later.line].address] = CELL_REGION[later.cell]
        for earlier in ordered[:k]:
            if earlier.cell != later.cell:
                continue
            kind = kind_of(earlier.kind, later.kind)
            if kind is not None:
                deps.add(DependencyRecord(by_line[earlier.line].address, by_line[later.line].address, kind))
    return deps, regions


def generate(spec: GenSpec) -> GeneratedProgram:
    """One program of ``spec.functions`` dependency functions plus its oracle."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & 0xFFFFFFFF, 0x6E6]))
    listing = _Listing()
    listing.emit(f".data {DATA_BASE:#x} {8 * spec.functions:#x}")
    planted_by_fn = []
    for k in range(spec.functions):
        start = len(listing.planted)
        _FunctionWriter(listing, rng, spec, f"f{k}", DATA_BASE + 8 * k, 1000 * k).write()
        planted_by_fn.append(listing.planted[start:])
    program, text, by_line = _resolve(listing)
    deps, planted_regions = set(), {}
    for planted in planted_by_fn:
        d, r = _plant(planted, by_line)
        deps |= d
        planted_regions.update(r)
    regions = trace_regions(program, trace_program(program, spec.seed))
    if regions != planted_regions:
        raise AssertionError("traced regions disagree with the planted cells")
    return GeneratedProgram(program, text, deps, regions)


def trace_regions(program, traces: dict) -> dict:
    """Region of each memory instruction's first explicit access, from the region map."""
    regions = region_map(program)
    out = {}
    for name, logs in traces.items():
        fn = program.function(name)
        for log in logs:
            for rec in log.records:
                if fn.entry <= rec.address < fn.end and rec.address not in out:
                    explicit = [acc for acc in rec.memory if not acc.implicit]
                    if explicit:
                        out[rec.address] = regions.region_of(explicit[0].address)
    return out


# --- signature programs ----------------------------------------------------

# how a callee touches an argument register, by type class
_USE = {
    "int": "    add r10,{r}",
    "char": "    and {r},0xff",
    "short": "    and {r},0xffff",
    "long": "    sub r10,{r}",
    "float": "    mov [rbp-0x8],{r}",
    "double": "    xor r10,{r}",
    "ptr": "    mov r10,[{r}]",
}
_RET = {
    "int": "    mov rax,r10",
    "char": "    and rax,0xff",
    "short": "    and rax,0xffff",
    "long": "    mov rax,0x1",
    "float": "    mov rax,[rbp-0x8]",
    "double": "    xor rax,r10",
    "ptr": "    lea rax,[rbp-0x8]",
}


def random_signature(rng) -> SignatureRecord:
    arity = int(rng.integers(0, 8))
    types = [str(rng.choice(TYPE_CLASSES)) for _ in range(arity)]
    return SignatureRecord.of(arity, types, str(rng.choice(RETURN_CLASSES))), types


def _signature_key(sig: SignatureRecord) -> tuple:
    return (sig.arity, sig.args[: min(sig.arity, ARG_SLOTS)])


def generate_signature_program(seed: int, functions: int = 8, sites_per_target: int = 1) -> GeneratedProgram:
    """Address-taken callees with pairwise distinguishable signatures and a dispatcher.

    The dispatcher ``main`` prepares each callee's arguments in the System V
    registers (a seventh on the stack), loads the callee address into ``rax``
    and calls through it; a non-void result is consumed from ``rax``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x5167]))
    sigs, full_types, seen = {}, {}, set()
    while len(sigs) < functions:
        sig, types = random_signature(rng)
        if _signature_key(sig) in seen:
            continue
        seen.add(_signature_key(sig))
        name = f"g{len(sigs)}"
        sigs[name], full_types[name] = sig, types
    listing = _Listing()
    for name, sig in sigs.items():
        listing.emit(f"{name}:")
        listing.emit("    push rbp")
        listing.emit("    mov rbp,rsp")
        listing.emit("    sub rsp,0x10")
        for k, t in enumerate(full_types[name]):
            if k < len(isa.ARG_REGS):
                listing.emit(_USE[t].format(r=isa.ARG_REGS[k]))
            else:
                listing.emit("    mov r10,[rbp+0x10]")
        if sig.ret != "void":
            listing.emit(_RET[sig.ret])
        listing.emit("    add rsp,0x10")
        listing.emit("    pop rbp")
        listing.emit("    ret")
    site_lines = {}
    listing.emit("main:")
    listing.emit("    push rbp")
    listing.emit("    mov rbp,rsp")
    listing.emit("    sub rsp,0x10")
    order = [name for name in sigs for _ in range(sites_per_target)]
    for name in (order[k] for k in rng.permutation(len(order))):
        sig, types = sigs[name], full_types[name]
        for k, t in enumerate(types[: len(isa.ARG_REGS)]):
            reg = isa.ARG_REGS[k]
            listing.emit(f"    lea {reg},[rbp-0x8]" if t == "ptr" else f"    mov {reg},{int(rng.integers(1, 1 << 8)):#x}")
        if len(types) > len(isa.ARG_REGS):
            listing.emit(f"    push {int(rng.integers(1, 1 << 8)):#x}")
        listing.emit(f"    mov rax,{name}")
        listing.emit("    call rax")
        site_lines[len(listing.lines)] = name
        if len(types) > len(isa.ARG_REGS):
            listing.emit("    add rsp,0x8")
        if sig.ret != "void":
            listing.emit("    mov r8,rax")
    listing.emit("    add rsp,0x10")
    listing.emit("    pop rbp")
    listing.emit("    ret")
    program, text, by_line = _resolve(listing)
    sites = {by_line[ln].address: name for ln, name in site_lines.items()}
    return GeneratedProgram(
        program,
        text,
        signatures=sigs,
        call_sites={addr: sigs[name] for addr, name in sites.items()},
        call_graph=sites,
    )


# --- small corpora for checks ------------------------------------------------

ARITH_OPS = ("add", "sub", "mov", "xor")
ARITH_REGS = ("rax", "rbx", "rcx", "rdx")


def arithmetic_programs(seed: int, count: int, value_bits: int = 8) -> list:
    """(listing, target op) pairs: a ``mov`` initialiser then one target instruction.

    Half the targets take a register source with its own initialiser, half
    an immediate.  Values are drawn below ``2**value_bits``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0xA417]))
    out = []
    for _ in range(count):
        op = ARITH_OPS[rng.integers(len(ARITH_OPS))]
        dst, src = (str(r) for r in rng.choice(ARITH_REGS, 2, replace=False))
        a, b = (int(v) for v in rng.integers(0, 1 << value_bits, 2))
        if rng.random() < 0.5:
            text = f"mov {dst},{a:#x};mov {src},{b:#x};{op} {dst},{src}"
        else:
            text = f"mov {dst},{a:#x};{op} {dst},{b:#x}"
        out.append((text, op))
    return out


def random_straight_line(rng, length: int) -> str:
    """Random snippet over registers, stack-relative memory and immediates."""
    regs = ("rax", "rcx", "rdx", "rsi", "rdi", "r8", "r9")
    mems = [f"[rbx+{8 * k:#x}]" for k in range(5)]
    lines = []
    for _ in range(length):
        r = rng.random()
        reg, reg2 = str(rng.choice(regs)), str(rng.choice(regs))
        mem, imm = str(rng.choice(mems)), hex(int(rng.integers(0, 1 << 16)))
        two = str(rng.choice(("mov", "add", "sub", "xor", "and", "or", "cmp", "test")))
        if r < 0.3:
            lines.append(f"{two} {reg},{rng.choice([reg2, mem, imm])}")
        elif r < 0.5:
            lines.append(f"{two} {mem},{rng.choice([reg2, imm])}")
        elif r < 0.7:
            lines.append(f"{rng.choice(('inc', 'dec', 'neg', 'push', 'pop'))} {reg}")
        elif r < 0.8:
            lines.append(f"lea {reg},{mem}")
        elif r < 0.9:
            lines.append(f"movsxd {reg},{mem}")
        else:
            lines.append("nop")
    return ";".join(lines)


def random_acyclic_listing(rng, blocks: int, name: str = "f") -> str:
    """Forward-only CFG of ``blocks`` blocks ending in jcc, jmp or fallthrough."""
    lines = [f"{name}:"]
    for b in range(blocks):
        lines.append(f".b{b}:")
        lines.append(f"    add rax,{int(rng.integers(1, 100))}")
        if b == blocks - 1:
            lines.append("    ret")
            continue
        choice = rng.integers(0, 3)
        target = int(rng.integers(b + 1, blocks))
        if choice == 0:
            lines.append(f"    cmp rdi,{int(rng.integers(0, 1 << 16))}")
            lines.append(f"    {rng.choice(isa.CONDITIONAL_JUMPS)} .b{target}")
        elif choice == 1:
            lines.append(f"    jmp .b{target}")
    return "\n".join(lines) + "\n"


# --- oracle files ------------------------------------------------------------


def format_regions(regions: dict) -> str:
    return "".join(f"{addr:#x} {region}\n" for addr, region in sorted(regions.items()))


def parse_regions(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip():
            addr, region = line.split()
            out[int(addr, 16)] = region
    return out


def format_signatures(signatures: dict) -> str:
    return "".join(sig.line(name) + "\n" for name, sig in signatures.items())


def parse_signatures(text: str) -> dict:
    return dict(SignatureRecord.parse(line) for line in text.splitlines() if line.strip())


def format_call_sites(call_sites: dict, call_graph: dict) -> str:
    """``site callee a t1 t2 t3 ret`` lines (the caller-side signature at the site)."""
    return "".join(
        f"{site:#x} " + call_sites[site].line(call_graph.get(site, "?")) + "\n" for site in sorted(call_sites)
    )


def parse_call_sites(text: str) -> tuple:
    sites, graph = {}, {}
    for line in text.splitlines():
        if not line.strip():
            continue
        addr, rest = line.split(None, 1)
        name, sig = SignatureRecord.parse(rest)
        site = int(addr, 16)
        sites[site] = sig
        if name != "?":
            graph[site] = name
    return sites, graph


__all__ = [
    "ALIAS_PATTERNS",
    "CODE_BASE",
    "GenSpec",
    "GenSpecError",
    "GeneratedProgram",
    "arithmetic_programs",
    "format_call_sites",
    "format_regions",
    "format_signatures",
    "generate",
    "generate_signature_program",
    "parse_call_sites",
    "parse_regions",
    "parse_signatures",
    "random_acyclic_listing",
    "random_straight_line",
    "trace_regions",
]
