from __future__ import annotations

import warnings
from dataclasses import dataclass

from ..model.network import RETURN_CLASSES, TYPE_CLASSES

MAX_ARITY = 7
ARG_SLOTS = 3


@dataclass(frozen=True)
class SignatureRecord:
    """Arity, the first three argument types (None past the arity) and a return class.

    ``args=None`` marks a signature whose argument types are unknown.
    """

    arity: int
    args: tuple | None = (None, None, None)
    ret: str = "void"

    def __post_init__(self):
        if not 0 <= self.arity <= MAX_ARITY:
            raise ValueError(f"arity {self.arity} outside 0..{MAX_ARITY}")
        if self.args is not None and len(self.args) != ARG_SLOTS:
            raise ValueError("exactly three argument slots")
        for k, a in enumerate(self.args or (), start=1):
            if (a is None) != (self.arity < k):
                raise ValueError(f"argument {k} must be present iff arity >= {k}")
            if a is not None and a not in TYPE_CLASSES:
                raise ValueError(f"unknown type class {a!r}")
        if self.ret not in RETURN_CLASSES:
            raise ValueError(f"unknown return class {self.ret!r}")

    @classmethod
    def of(cls, arity: int, types=(), ret: str = "void") -> "SignatureRecord":
        types = list(types)[:ARG_SLOTS]
        types += [None] * (ARG_SLOTS - len(types))
        return cls(arity, tuple(t if k < arity else None for k, t in enumerate(types)), ret)

    def line(self, name: str) -> str:
        args = self.args or ("?",) * ARG_SLOTS
        return " ".join([name, str(self.arity)] + [a or "-" for a in args] + [self.ret])

    @classmethod
    def parse(cls, line: str) -> tuple:
        name, arity, a1, a2, a3, ret = line.split()
        args = None if "?" in (a1, a2, a3) else tuple(None if a == "-" else a for a in (a1, a2, a3))
        return name, cls(int(arity), args, ret)


@dataclass(frozen=True)
class MatchPolicy:
    arity: str = "loose"
    use_return: bool = False
    use_args: bool = False
    required: int = 3

    def __post_init__(self):
        if self.arity not in ("loose", "strict"):
            raise ValueError("arity mode is loose or strict")
        if self.required not in (2, 3):
            raise ValueError("required argument matches is 2 or 3")

    @property
    def name(self) -> str:
        parts = [self.arity]
        if self.use_args:
            parts.append(f"arg{self.required}")
        if self.use_return:
            parts.append("ret")
        return "+".join(parts)


def policy_grid(required: int = 3) -> list:
    """The eight compositions: two arity modes times {-, ret, arg, arg+ret}."""
    return [
        MatchPolicy(mode, use_return=ret, use_args=args, required=required)
        for mode in ("loose", "strict")
        for args, ret in ((False, False), (False, True), (True, False), (True, True))
    ]


def arity_ok(caller: SignatureRecord, callee: SignatureRecord, mode: str) -> bool:
    return caller.arity >= callee.arity if mode == "loose" else caller.arity == callee.arity


def return_ok(caller: SignatureRecord, callee: SignatureRecord) -> bool:
    return caller.ret == "void" or callee.ret != "void"


def args_ok(caller: SignatureRecord, callee: SignatureRecord, required: int) -> bool:
    """Matching types among slots both sides fill must reach min(required, slots)."""
    shared = min(caller.arity, callee.arity, ARG_SLOTS)
    if shared and (caller.args is None or callee.args is None):
        warnings.warn("argument types unknown for a signature; no match")
        return False
    pairs = list(zip(caller.args[:shared], callee.args[:shared])) if shared else []
    return sum(a == b for a, b in pairs) >= min(required, shared)


def match_indirect_call(caller: SignatureRecord, callee: SignatureRecord, policy: MatchPolicy) -> bool:
    if not arity_ok(caller, callee, policy.arity):
        return False
    if policy.use_return and not return_ok(caller, callee):
        return False
    if policy.use_args and not args_ok(caller, callee, policy.required):
        return False
    return True


def resolve_targets(sites: dict, functions: dict, policy: MatchPolicy) -> dict:
    """Call-site -> sorted candidate callee names under ``policy``."""
    return {
        site: sorted(name for name, sig in functions.items() if match_indirect_call(caller, sig, policy))
        for site, caller in sites.items()
    }
