"""Textual listing parser.

Grammar (EBNF)::

    listing     = { line } ;
    line        = [ directive | label | instruction ] [ ";" comment ] ;
    directive   = ".data" int int            (* start, size of a global region *)
                | ".extern" name ;           (* declare an external stub symbol *)
    label       = name ":" ;                 (* names starting with "." are local *)
    instruction = mnemonic [ operand [ "," operand ] ] { annotation } ;
    annotation  = "@addr=" hex | "@len=" int ;
    operand     = register | int | name | [ size "ptr" ] "[" address "]" ;
    address     = term { ("+" | "-") term } ;
    term        = register [ "*" scale ] | int ;

A non-local label opens a new function.  Instructions without ``@addr`` are
laid out right after their predecessor; a new function without ``@addr``
starts at the next 16-byte boundary.  Immediates that name a label or an
external symbol resolve to its address.
"""

from __future__ import annotations

import re

from . import isa
from .program import Function, Instruction, Operand, Program

CODE_BASE = 0x401000
STUB_BASE = 0x7F000000
STUB_STRIDE = 0x10
KNOWN_EXTERNS = ("malloc", "calloc", "free", "memset")

_NAME = re.compile(r"^[A-Za-z_.$][\w.$@]*$")
_ANNOTATION = re.compile(r"@(addr|len)=(\S+)")
_PTR = re.compile(r"^(?:byte|word|dword|qword)\s+ptr\s+", re.IGNORECASE)


class AsmSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def parse_int(text: str) -> int:
    text = text.strip().lower()
    neg = text.startswith("-")
    if neg or text.startswith("+"):
        text = text[1:].strip()
    if text.startswith("0x"):
        value = int(text, 16)
    elif text.isdigit():
        value = int(text, 10)
    else:
        raise ValueError(f"not an integer: {text!r}")
    return -value if neg else value


def _parse_memory(body: str, line: int) -> Operand:
    terms = re.findall(r"([+-]?)\s*([^+-]+)", body.replace(" ", ""))
    if not terms or "".join(s + t for s, t in terms) != body.replace(" ", ""):
        raise AsmSyntaxError(f"malformed memory operand [{body}]", line)
    base = index = None
    scale, disp = 1, 0
    for sign, term in terms:
        term = term.lower()
        if "*" in term:
            reg, _, factor = term.partition("*")
            if reg not in isa.GPRS or sign == "-" or index is not None:
                raise AsmSyntaxError(f"malformed memory operand [{body}]", line)
            try:
                scale = parse_int(factor)
            except ValueError:
                raise AsmSyntaxError(f"bad scale in [{body}]", line) from None
            if scale not in (1, 2, 4, 8):
                raise AsmSyntaxError(f"bad scale in [{body}]", line)
            index = reg
        elif term in isa.REGISTERS:
            if sign == "-":
                raise AsmSyntaxError(f"negated register in [{body}]", line)
            if base is None:
                base = term
            elif index is None and term != "rip":
                index = term
            else:
                raise AsmSyntaxError(f"too many registers in [{body}]", line)
        else:
            try:
                disp += parse_int(sign + term)
            except ValueError:
                raise AsmSyntaxError(f"malformed memory operand [{body}]", line) from None
    if base == "rip" and index is not None:
        raise AsmSyntaxError(f"rip-relative operand cannot be indexed: [{body}]", line)
    if index == "rip":
        raise AsmSyntaxError(f"rip cannot be an index: [{body}]", line)
    return Operand.memory(base=base, index=index, disp=disp, scale=scale)


def parse_operand(text: str, line: int = 0) -> Operand:
    text = _PTR.sub("", text.strip())
    if not text:
        raise AsmSyntaxError("empty operand", line)
    if text.startswith("[") or text.endswith("]"):
        if not (text.startswith("[") and text.endswith("]")):
            raise AsmSyntaxError(f"malformed memory operand {text}", line)
        return _parse_memory(text[1:-1], line)
    low = text.lower()
    if low in isa.REGISTERS:
        if low == "rip":
            raise AsmSyntaxError("rip is not a general operand", line)
        return Operand.register(low)
    try:
        return Operand.immediate(parse_int(text))
    except ValueError:
        pass
    if _NAME.match(text):
        return Operand("imm", label=text)
    raise AsmSyntaxError(f"cannot parse operand {text!r}", line)


def _split_operands(text: str) -> list:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur))
    return [p.strip() for p in parts]


def _check_operands(mnemonic: str, ops: list, line: int) -> None:
    want = isa.ARITY[mnemonic]
    if len(ops) != want:
        raise AsmSyntaxError(f"{mnemonic} takes {want} operand(s), got {len(ops)}", line)
    if want == 2:
        dst, src = ops
        if dst.kind == "imm" and mnemonic not in ("cmp", "test"):
            raise AsmSyntaxError(f"{mnemonic}: immediate destination", line)
        if dst.kind == "mem" and src.kind == "mem":
            raise AsmSyntaxError(f"{mnemonic}: two memory operands", line)
        if mnemonic == "lea" and (dst.kind != "reg" or src.kind != "mem"):
            raise AsmSyntaxError("lea needs a register and a memory operand", line)
        if mnemonic == "movsxd" and (dst.kind != "reg" or src.kind == "imm"):
            raise AsmSyntaxError("movsxd needs a register destination", line)
    elif mnemonic in ("pop", "inc", "dec", "neg") and ops[0].kind == "imm":
        raise AsmSyntaxError(f"{mnemonic}: immediate operand", line)


def parse_asm(text: str, externs=KNOWN_EXTERNS) -> Program:
    """Parse an assembly listing into a :class:`Program`.

    Raises :class:`AsmSyntaxError` (carrying the line number) for unknown
    mnemonics, malformed operands and unresolved labels.
    """
    extern_names = list(externs)
    data = []
    pending = []  # (kind, payload, line)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".data") or line.startswith(".extern"):
            words = line.split()
            try:
                if words[0] == ".data":
                    data.append((parse_int(words[1]), parse_int(words[2])))
                elif words[0] == ".extern" and len(words) == 2:
                    if words[1] not in extern_names:
                        extern_names.append(words[1])
                else:
                    raise ValueError
            except (ValueError, IndexError):
                raise AsmSyntaxError(f"malformed directive {line!r}", lineno) from None
            continue
        if line.endswith(":") and _NAME.match(line[:-1]):
            pending.append(("label", line[:-1], lineno))
            continue
        notes = dict(_ANNOTATION.findall(line))
        line = _ANNOTATION.sub("", line).strip()
        mnemonic, _, rest = line.partition(" ")
        mnemonic = mnemonic.lower()
        if mnemonic not in isa.MNEMONICS:
            raise AsmSyntaxError(f"unknown mnemonic {mnemonic!r}", lineno)
        ops = [parse_operand(p, lineno) for p in _split_operands(rest)] if rest.strip() else []
        _check_operands(mnemonic, ops, lineno)
        try:
            addr = parse_int(notes["addr"]) if "addr" in notes else None
            length = parse_int(notes["len"]) if "len" in notes else None
        except ValueError:
            raise AsmSyntaxError("malformed annotation", lineno) from None
        if length is not None and length <= 0:
            raise AsmSyntaxError("@len must be positive", lineno)
        pending.append(("ins", (mnemonic, ops, addr, length), lineno))

    externs_map = {name: STUB_BASE + STUB_STRIDE * i for i, name in enumerate(extern_names)}

    # layout pass: addresses and lengths, labels bound to the next instruction
    functions, labels = [], {}
    cursor = CODE_BASE
    open_labels = []
    current = None
    laid = []
    for kind, payload, lineno in pending:
        if kind == "label":
            if payload in labels or any(payload == name for name, _ in open_labels):
                raise AsmSyntaxError(f"duplicate label {payload!r}", lineno)
            open_labels.append((payload, lineno))
            if not payload.startswith("."):
                current = Function(payload)
                functions.append(current)
                if cursor % 16:
                    cursor += 16 - cursor % 16
            continue
        mnemonic, ops, addr, length = payload
        if current is None:
            current = Function("main")
            functions.append(current)
        if addr is not None:
            cursor = addr
        if length is None:
            sized = [op if op.label is None else Operand.immediate(0x10000) for op in ops]
            length = isa.encoded_length(mnemonic, sized)
        for name, _ in open_labels:
            labels[name] = cursor
        open_labels = []
        laid.append((current, mnemonic, ops, cursor, length, lineno))
        cursor += length
    for name, lineno in open_labels:
        labels[name] = cursor

    for fn, mnemonic, ops, addr, length, lineno in laid:
        resolved = []
        for op in ops:
            if op.kind == "imm" and op.label is not None:
                if op.label in labels:
                    op = Operand.immediate(labels[op.label], label=op.label)
                elif op.label in externs_map:
                    op = Operand.immediate(externs_map[op.label], label=op.label)
                else:
                    raise AsmSyntaxError(f"unresolved label {op.label!r}", lineno)
            resolved.append(op)
        fn.instructions.append(Instruction(addr, mnemonic, tuple(resolved), length, lineno))

    functions = [fn for fn in functions if fn.instructions]
    return Program(functions=functions, labels=labels, externs=externs_map, data=data)


def parse_snippet(text: str, address: int = CODE_BASE) -> list:
    """Parse a ``;``- or newline-separated instruction sequence.

    Convenience for short examples such as ``"add rax,0x8;mov [rax],rbx"``.
    """
    lines = [part.strip() for chunk in text.splitlines() for part in chunk.split(";")]
    lines = [ln for ln in lines if ln]
    if not lines:
        return []
    lines[0] += f" @addr={hex(address)}"
    program = parse_asm("\n".join(lines))
    return [ins for fn in program.functions for ins in fn.instructions]


def format_program(program: Program) -> str:
    """Render a program as a listing that parses back to the same program."""
    out = []
    for start, size in program.data:
        out.append(f".data {hex(start)} {hex(size)}")
    for name in program.externs:
        if name not in KNOWN_EXTERNS:
            out.append(f".extern {name}")
    by_addr = {}
    for label, addr in program.labels.items():
        by_addr.setdefault(addr, []).append(label)
    cursor = None
    for fn in program.functions:
        out.append(f"{fn.name}:")
        for ins in fn.instructions:
            for label in sorted(by_addr.get(ins.address, [])):
                if label != fn.name and label.startswith("."):
                    out.append(f"{label}:")
            text = "    " + str(ins)
            if ins.address != cursor:
                text += f" @addr={hex(ins.address)}"
            sized = [op if op.label is None else Operand.immediate(0x10000) for op in ins.operands]
            if ins.length != isa.encoded_length(ins.mnemonic, sized):
                text += f" @len={ins.length}"
            out.append(text)
            cursor = ins.next_address
    return "\n".join(out) + "\n"
