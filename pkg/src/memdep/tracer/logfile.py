"""Line formats for trace logs and dependency lists.

Trace file: each trace opens with a header ::

    # function=<name> run=<int> seed=<int> truncated=<0|1> aborted=<hex|->

followed by one line per executed instruction ::

    addr=<hex> mnem=<str> ops=[<tok>:<in-hex>:<out-hex>,...] mem=[<addr-hex>:<width>:<r|w>:<val-hex>,...] flipped=<0|1>

``ops`` lists the value-bearing tokens in token order, then implicit effects
whose token starts with ``%`` (``%rsp``, ``%rax``, ``%flags``, ``%alloc``,
``%rip``).  ``%flags`` packs ZF, SF, CF, OF into bits 0..3.  Whether a memory
access is implicit (stack traffic of push/pop/call/ret) is not stored; it is
recovered from the mnemonic when reading.

Dependency file: ``dep <addrA-hex> <addrB-hex> <RAW|WAR|WAW>`` lines.
"""

from __future__ import annotations

import re

from ..asm.isa import REGISTERS
from ..asm.machine import FLAG_NAMES, EffectRecord, MemoryAccess, OperandValue
from .deps import KINDS, DependencyRecord
from .forced import TraceLog

_LINE = re.compile(
    r"^addr=(0x[0-9a-f]+) mnem=(\S+) ops=\[(.*?)\] mem=\[(.*?)\] flipped=([01])$"
)


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def format_record(rec: EffectRecord) -> str:
    ops = ",".join(f"{v.token}:{v.before:x}:{v.after:x}" for v in [*rec.operands, *rec.implicit])
    mem = ",".join(f"{a.address:x}:{a.width}:{a.kind}:{a.value:x}" for a in rec.memory)
    return f"addr={rec.address:#x} mnem={rec.mnemonic} ops=[{ops}] mem=[{mem}] flipped={int(rec.flipped)}"


def format_trace(trace: TraceLog) -> str:
    head = (
        f"# function={trace.function} run={trace.run} seed={trace.seed} "
        f"truncated={int(trace.truncated)} aborted={trace.aborted or '-'}"
    )
    return "\n".join([head, *(format_record(r) for r in trace.records)]) + "\n"


def write_traces(traces, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for trace in traces:
            fh.write(format_trace(trace))


def _implicit_access(mnemonic: str, kind: str, rec_implicit: list) -> bool:
    if mnemonic == "ret":
        return True
    if mnemonic == "push":
        return kind == "w"
    if mnemonic == "pop":
        return kind == "r"
    if mnemonic == "call":
        return kind == "w" and any(v.token == "%rsp" for v in rec_implicit)
    return False


def parse_record(line: str, lineno: int = 0) -> EffectRecord:
    m = _LINE.match(line.strip())
    if not m:
        raise TraceFormatError("malformed trace line", lineno)
    addr, mnem, ops_text, mem_text, flipped = m.groups()
    operands, implicit = [], []
    try:
        for item in filter(None, ops_text.split(",")):
            tok, before, after = item.split(":")
            value = OperandValue(tok, int(before, 16), int(after, 16))
            (implicit if tok.startswith("%") else operands).append(value)
        raw = []
        for item in filter(None, mem_text.split(",")):
            a, width, kind, val = item.split(":")
            if kind not in ("r", "w"):
                raise ValueError(kind)
            raw.append((int(a, 16), int(width), kind, int(val, 16)))
    except ValueError:
        raise TraceFormatError("malformed operand or access list", lineno) from None
    memory = [
        MemoryAccess(a, w, k, v, _implicit_access(mnem, k, implicit)) for a, w, k, v in raw
    ]
    writes = {}
    for v in operands:
        if v.token in REGISTERS and v.before != v.after:
            writes[v.token] = v.after
    for v in implicit:
        if v.token[1:] in REGISTERS and v.token != "%rip":
            writes[v.token[1:]] = v.after
    return EffectRecord(
        address=int(addr, 16),
        mnemonic=mnem,
        operands=operands,
        memory=memory,
        implicit=implicit,
        reg_writes=writes,
        flipped=flipped == "1",
    )


def _finish(trace: TraceLog) -> None:
    """Fill flags and next-rip, which the line format carries only as deltas."""
    flags = 0
    for i, rec in enumerate(trace.records):
        for v in rec.implicit:
            if v.token == "%flags":
                flags = v.after
        rec.flags = tuple(bool(flags >> k & 1) for k in range(len(FLAG_NAMES)))
        rip = next((v.after for v in rec.implicit if v.token == "%rip"), None)
        if rip is None and i + 1 < len(trace.records):
            rip = trace.records[i + 1].address
        rec.rip = rip or 0
        if rec.flipped:
            trace.flipped.add(rec.address)


def parse_traces(text: str) -> list:
    traces = []
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            fields = dict(part.split("=", 1) for part in line[1:].split() if "=" in part)
            try:
                current = TraceLog(
                    fields["function"], int(fields["run"]), int(fields["seed"]),
                    truncated=fields.get("truncated") == "1",
                    aborted=None if fields.get("aborted", "-") == "-" else fields["aborted"],
                )
            except (KeyError, ValueError):
                raise TraceFormatError("malformed trace header", lineno) from None
            traces.append(current)
            continue
        if current is None:
            raise TraceFormatError("record before any trace header", lineno)
        current.records.append(parse_record(line, lineno))
    for trace in traces:
        _finish(trace)
    return traces


def read_traces(path) -> list:
    with open(path, encoding="ascii") as fh:
        return parse_traces(fh.read())


def format_dependencies(records) -> str:
    return "".join(f"dep {r.a:#x} {r.b:#x} {r.kind}\n" for r in sorted(records))


def write_dependencies(records, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_dependencies(records))


def parse_dependencies(text: str) -> set:
    out = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        words = line.split()
        if not words or words[0].startswith("#"):
            continue
        if len(words) != 4 or words[0] != "dep" or words[3] not in KINDS:
            raise TraceFormatError("malformed dependency line", lineno)
        try:
            a, b = sorted((int(words[1], 16), int(words[2], 16)))
        except ValueError:
            raise TraceFormatError("malformed dependency address", lineno) from None
        out.add(DependencyRecord(a, b, words[3]))
    return out


def read_dependencies(path) -> set:
    with open(path, encoding="ascii") as fh:
        return parse_dependencies(fh.read())
