"""Coverage-guided, semantic-preserving forced execution.

Each run restores the post-initialisation snapshot, randomises registers and
stack contents from a seed, and executes one function from its entry.  At a
conditional branch whose naturally-taken block is already covered while the
other is not, the branch is patched to its inverse condition for the rest of
the run and execution follows the patched semantics, so every recorded path
is one the patched code really takes.

``policy="lookahead"`` (the default) additionally flips when both targets
are covered but only the alternative still reaches an uncovered block of the
function; this is what bounds full coverage of an acyclic function with ``c``
conditionals to ``c + 1`` runs.  ``policy="literal"`` applies only the
covered/uncovered rule and ``policy="none"`` never flips.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..asm import isa
from ..asm.machine import execute
from .cfg import build_cfg
from .environment import INITIAL_RSP, STACK_BASE

log = logging.getLogger(__name__)

STEP_BUDGET = 4096
RUN_CAP = 32
REGISTER_RANGE = 1 << 16
STACK_VALUE_RANGE = 1 << 8
STACK_RANDOM_BELOW = 0x400
POLICIES = ("lookahead", "literal", "none")


class CoverageSet(set):
    """Basic-block entry addresses seen so far; only ever grows."""

    def discard(self, item):  # pragma: no cover - guard
        raise TypeError("coverage is monotone")

    def remove(self, item):  # pragma: no cover - guard
        raise TypeError("coverage is monotone")


@dataclass
class TraceLog:
    function: str
    run: int
    seed: int
    records: list = field(default_factory=list)
    flipped: set = field(default_factory=set)
    truncated: bool = False
    aborted: str | None = None  # unmapped target address, hex

    def executed(self) -> set:
        return {rec.address for rec in self.records}


def randomize(state, seed: int) -> None:
    """Seed registers from [0, 2**16) and 8-byte stack slots from [0, 2**8)."""
    rng = np.random.default_rng(seed)
    regs = state.registers
    values = rng.integers(0, REGISTER_RANGE, size=len(isa.GPRS))
    for reg, v in zip(isa.GPRS, values):
        regs[reg] = int(v)
    regs["rsp"] = INITIAL_RSP
    lo = INITIAL_RSP - STACK_RANDOM_BELOW
    slots = rng.integers(0, STACK_VALUE_RANGE, size=(STACK_BASE - lo) // 8)
    for i, v in enumerate(slots):
        state.write(lo + 8 * i, 8, int(v))


class _Tracer:
    def __init__(self, program, policy: str = "lookahead", budget: int = STEP_BUDGET):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.program = program
        self.policy = policy
        self.budget = budget
        self.code = program.instruction_map()
        self.cfgs = {fn.name: build_cfg(fn) for fn in program.functions}
        self.owner = {}
        for fn in program.functions:
            cfg = self.cfgs[fn.name]
            for addr in cfg.block_of:
                self.owner[addr] = cfg

    def _reaches_uncovered(self, cfg, block, coverage) -> bool:
        return any(b not in coverage for b in cfg.reachable(block))

    def _decide(self, cfg, bb1, bb2, coverage) -> bool:
        if self.policy == "none":
            return False
        if bb1 in coverage and bb2 not in coverage:
            return True
        if self.policy == "literal" or bb1 not in coverage:
            return False
        return not self._reaches_uncovered(cfg, bb1, coverage) and self._reaches_uncovered(
            cfg, bb2, coverage
        )

    def run(self, function, state, coverage, seed, run_index=0, patches=None) -> TraceLog:
        randomize(state, seed)
        regs = state.registers
        regs["rip"] = function.entry
        patched = dict(patches or {})
        trace = TraceLog(function.name, run_index, seed)
        depth = 0
        for _ in range(self.budget):
            rip = regs["rip"]
            ins = self.code.get(rip)
            if ins is None:
                trace.aborted = hex(rip)
                log.info("%s run %d jumped to unmapped %s", function.name, run_index, hex(rip))
                return trace
            cfg = self.owner[rip]
            if cfg.block_of[rip] == rip:
                coverage.add(rip)
            mnemonic = patched.get(rip, ins.mnemonic)
            if isa.is_conditional(mnemonic) and rip not in patched:
                target = ins.operands[0].value
                taken = isa.condition_holds(mnemonic, state.flags)
                bb1, bb2 = (target, ins.next_address) if taken else (ins.next_address, target)
                if self._decide(cfg, bb1, bb2, coverage):
                    mnemonic = isa.invert_condition(mnemonic)
                    patched[rip] = mnemonic
            if mnemonic != ins.mnemonic:
                ins = ins.with_mnemonic(mnemonic)
                trace.flipped.add(rip)
            record = execute(state, ins)
            record.flipped = rip in trace.flipped
            trace.records.append(record)
            if mnemonic == "call" and any(acc.implicit for acc in record.memory):
                depth += 1
            elif mnemonic == "ret":
                if depth == 0:
                    return trace
                depth -= 1
        trace.truncated = True
        log.info("%s run %d hit the step budget", function.name, run_index)
        return trace


def force_execute(
    function, state, coverage, seed, program, *, run_index=0, policy="lookahead",
    budget=STEP_BUDGET, patches=None,
) -> TraceLog:
    """Execute ``function`` once from a restored ``state``.

    ``patches`` maps branch addresses to mnemonics applied statically before
    the run; patched branches are never flipped at run time.  Either way,
    ``TraceLog.flipped`` holds the branches executed with a mnemonic other
    than the listing's.
    """
    return _Tracer(program, policy, budget).run(function, state, coverage, seed, run_index, patches)


def function_blocks(function) -> set:
    return build_cfg(function).reachable()


def trace_function_to_fixpoint(
    function, snapshot, coverage, seeds, program, *, run_cap=RUN_CAP, policy="lookahead",
    budget=STEP_BUDGET,
) -> list:
    """Repeat forced runs until the function's block coverage stops growing."""
    tracer = _Tracer(program, policy, budget)
    blocks = tracer.cfgs[function.name].reachable()
    logs = []
    for run, seed in enumerate(seeds):
        if run >= run_cap:
            break
        before = len(blocks & coverage)
        logs.append(tracer.run(function, snapshot.restore(), coverage, seed, run))
        after = len(blocks & coverage)
        if after == len(blocks) or after == before:
            break
    return logs


def run_seeds(base_seed: int, name: str, count: int = RUN_CAP) -> list:
    """Deterministic per-function seed stream derived from a run seed."""
    key = sum((i + 1) * ord(ch) for i, ch in enumerate(name))
    ss = np.random.SeedSequence([base_seed & 0xFFFFFFFF, key, len(name)])
    return [int(x) for x in ss.generate_state(count)]


def trace_program(program, seed: int = 0, *, run_cap=RUN_CAP, policy="lookahead", budget=STEP_BUDGET):
    """Trace every function of ``program`` against one shared coverage set."""
    from .environment import initialize_environment

    _, snapshot = initialize_environment(program, seed)
    coverage = CoverageSet()
    return {
        fn.name: trace_function_to_fixpoint(
            fn, snapshot, coverage, run_seeds(seed, fn.name, run_cap), program,
            run_cap=run_cap, policy=policy, budget=budget,
        )
        for fn in program.functions
    }
