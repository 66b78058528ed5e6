"""Turn traced programs into finetuning and probing samples."""

from __future__ import annotations

from ..encoding.sample import MAX_LEN, STRIDE, build_sample, windows
from ..encoding.tokenize import instruction_tokens
from ..tracer.deps import memory_instructions


def token_counts(instructions) -> list:
    return [len(instruction_tokens(ins)) for ins in instructions]


def function_windows(function, max_len: int = MAX_LEN, stride: int = STRIDE) -> list:
    return windows(token_counts(function.instructions), max_len, stride)


def function_samples(function, pairs=(), records=(), regions=None, vocab=None, max_len=MAX_LEN, stride=STRIDE) -> list:
    """One sample per window of ``function`` with window-local labels.

    labels: ``function``, ``addresses`` (instruction addresses), ``memory``
    (indices of candidate instructions), ``deps`` (dependent index pairs,
    both inside the window) and, when ``regions`` maps addresses to a
    class id, ``regions`` as ``[index, class]`` rows.
    """
    instrs = function.instructions
    candidates = set(memory_instructions(function))
    out = []
    for start, stop in function_windows(function, max_len, stride):
        chunk = instrs[start:stop]
        index = {ins.address: k for k, ins in enumerate(chunk)}
        labels = {
            "function": function.name,
            "addresses": [ins.address for ins in chunk],
            "memory": [k for k, ins in enumerate(chunk) if ins.address in candidates],
            "deps": sorted([index[a], index[b]] for a, b in pairs if a in index and b in index),
        }
        if regions is not None:
            labels["regions"] = [[index[a], r] for a, r in sorted(regions.items()) if a in index]
        out.append(build_sample(chunk, records, vocab, labels=labels))
    return out


def region_ids(regions: dict) -> dict:
    """Address -> region class id from address -> region name."""
    from ..model.network import REGIONS

    return {a: REGIONS.index(r) for a, r in regions.items()}


def signature_samples(program, signatures: dict, call_sites: dict, vocab=None, max_len=MAX_LEN):
    """Callee samples (one per signed function) and caller samples (one per call site).

    Callee samples are the function's first window.  A caller sample is the
    first window holding the site, with ``labels['site']`` the token index
    of the call instruction.
    """
    from .probes import signature_classes

    callee, caller = [], []
    for fn in program.functions:
        if fn.name in signatures:
            s = function_samples(fn, vocab=vocab, max_len=max_len)[0]
            s.labels["signature"] = signature_classes(signatures[fn.name])
            callee.append(s)
        sites = [ins.address for ins in fn.instructions if ins.address in call_sites]
        if not sites:
            continue
        parts = function_samples(fn, vocab=vocab, max_len=max_len)
        for site in sites:
            for s in parts:
                addrs = s.labels["addresses"]
                if site in addrs:
                    c = s.copy()
                    c.labels["site"] = int(s.anchors()[addrs.index(site)])
                    c.labels["site_address"] = site
                    c.labels["signature"] = signature_classes(call_sites[site])
                    caller.append(c)
                    break
    return callee, caller
