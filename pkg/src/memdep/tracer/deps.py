"""Ground-truth memory dependencies from concrete traces."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

KINDS = ("RAW", "WAR", "WAW")
_CHUNK = 8


@dataclass(frozen=True, order=True)
class DependencyRecord:
    """Unordered instruction pair (stored with ``a < b``) plus its first witness.

    ``kind`` and ``[lo, hi)`` come from the earliest overlapping access pair,
    ordered by trace, then by the later access, then by the earlier one.
    """

    a: int
    b: int
    kind: str
    lo: int = field(default=0, compare=False)
    hi: int = field(default=0, compare=False)

    @property
    def pair(self) -> tuple:
        return (self.a, self.b)

    def key(self) -> tuple:
        return (self.a, self.b, self.kind)


def kind_of(earlier: str, later: str) -> str | None:
    if earlier == "w":
        return "RAW" if later == "r" else "WAW"
    return "WAR" if later == "w" else None


def accesses(trace, within=None) -> list:
    """Flatten a trace to ``(seq, instruction, start, end, kind)`` in execution order."""
    out = []
    seq = 0
    for rec in trace.records:
        if within is not None and rec.address not in within:
            seq += len(rec.memory)
            continue
        for acc in rec.memory:
            out.append((seq, rec.address, acc.address, acc.address + acc.width, acc.kind))
            seq += 1
    return out


def _witnesses(items):
    """Yield overlapping access pairs ``(earlier, later)`` via 8-byte buckets."""
    buckets = defaultdict(list)
    for item in items:
        _, _, start, end, _ = item
        for chunk in range(start // _CHUNK, (end - 1) // _CHUNK + 1):
            buckets[chunk].append(item)
    seen = set()
    for bucket in buckets.values():
        for j, later in enumerate(bucket):
            for earlier in bucket[:j]:
                if earlier[1] == later[1]:
                    continue
                if earlier[2] < later[3] and later[2] < earlier[3]:
                    ids = (earlier[0], later[0])
                    if ids not in seen:
                        seen.add(ids)
                        yield earlier, later


def extract_dependencies(traces, within=None) -> set:
    """Union over ``traces`` of instruction pairs with overlapping accesses, one a write.

    ``within`` optionally restricts both instructions to a set of addresses
    (the traced function's own code, excluding callees).
    """
    best = {}
    for t_index, trace in enumerate(traces):
        for earlier, later in _witnesses(accesses(trace, within)):
            kind = kind_of(earlier[4], later[4])
            if kind is None:
                continue
            pair = tuple(sorted((earlier[1], later[1])))
            rank = (t_index, later[0], earlier[0])
            if pair in best and best[pair][0] <= rank:
                continue
            lo, hi = max(earlier[2], later[2]), min(earlier[3], later[3])
            best[pair] = (rank, DependencyRecord(pair[0], pair[1], kind, lo, hi))
    return {rec for _, rec in best.values()}


def dependency_pairs(records) -> set:
    return {(r.a, r.b) for r in records}


def memory_instructions(function) -> list:
    """Candidate addresses for pair prediction: explicit memory operands and push/pop.

    ``lea`` computes an address without touching memory and is excluded, as
    are ``call``/``ret``, whose return-address slot never pairs with another
    instruction of the same function.
    """
    return [
        ins.address
        for ins in function.instructions
        if (ins.memory_operand() is not None and ins.mnemonic != "lea")
        or ins.mnemonic in ("push", "pop")
    ]
