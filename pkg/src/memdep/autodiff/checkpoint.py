"""Parameter files: ``manifest.txt`` (name and shape per line) plus ``weights.bin``.

The payload is every parameter flattened in manifest order as little-endian
float32.  Shapes are written as comma-separated dimensions (empty for a scalar).
"""

from __future__ import annotations

import os

import numpy as np

MANIFEST = "manifest.txt"
PAYLOAD = "weights.bin"


def save_parameters(params: dict, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    lines, chunks = [], []
    for name, tensor in params.items():
        if any(ch.isspace() for ch in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        data = np.asarray(tensor.data if hasattr(tensor, "data") else tensor)
        lines.append(f"{name} {','.join(str(n) for n in data.shape)}\n")
        chunks.append(data.astype("<f4").tobytes())
    with open(os.path.join(directory, MANIFEST), "w", encoding="ascii") as fh:
        fh.writelines(lines)
    with open(os.path.join(directory, PAYLOAD), "wb") as fh:
        fh.write(b"".join(chunks))


def load_parameters(directory) -> dict:
    """Return ``{name: float64 array}`` in manifest order."""
    with open(os.path.join(directory, MANIFEST), encoding="ascii") as fh:
        entries = []
        for line in fh:
            if not line.strip():
                continue
            name, _, dims = line.rstrip("\n").partition(" ")
            entries.append((name, tuple(int(d) for d in dims.split(",") if d)))
    raw = np.fromfile(os.path.join(directory, PAYLOAD), dtype="<f4")
    out, offset = {}, 0
    for name, shape in entries:
        size = int(np.prod(shape)) if shape else 1
        if offset + size > raw.size:
            raise ValueError("checkpoint payload is shorter than its manifest")
        out[name] = raw[offset : offset + size].astype(np.float64).reshape(shape)
        offset += size
    if offset != raw.size:
        raise ValueError("checkpoint payload is longer than its manifest")
    return out
