from __future__ import annotations

import numpy as np

from ..autodiff import (
    Tensor,
    concat,
    embedding,
    getitem,
    load_parameters,
    reshape,
    save_parameters,
    sigmoid,
    softmax,
    tabs,
    tsum,
)
from .batch import MASKED, VALUE, Batch, collate
from .config import ModelConfig
from .layers import MLP, AttentionBlock, LayerNorm, ParameterStore, ValueEncoder, padding_bias

REGIONS = ("stack", "heap", "global", "other")
TYPE_CLASSES = ("int", "char", "short", "long", "float", "double", "ptr")
RETURN_CLASSES = TYPE_CLASSES + ("void",)
SIGNATURE_HEADS = (("arity", 8), ("arg1", 7), ("arg2", 7), ("arg3", 7), ("ret", 8))

# parameters only the trace path reads; a static forward must leave them untouched
TRACE_ONLY_PREFIXES = ("fusion.gate_t.", "fusion.value_t.", "value.mask")


def sinusoid_table(n: int, d: int) -> np.ndarray:
    """Fixed sin/cos encodings of token index, shape (n, d)."""
    pos = np.arange(n)[:, None]
    freq = np.exp(-np.log(10000.0) * (np.arange(0, d, 2) / d))
    table = np.zeros((n, d))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: d // 2])
    return table


class MemDepNet:
    """Token transformer with gated trace/address fusion and task heads.

    Code, position and memory-flag embeddings are summed (plus a fixed
    token-index encoding unless ``sequence_position`` is off), run through
    ``fusion_layer`` attention blocks, fused with value-encoder embeddings
    of the trace and address bytes, then run through the remaining blocks.
    """

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        cfg = self.config
        d = cfg.d
        store = ParameterStore(np.random.default_rng(seed))
        self._store = store
        self.sequence = sinusoid_table(cfg.max_len, d) if cfg.sequence_position else None
        self.code = store.normal("embed.code", (cfg.vocab_size, d), 0.1)
        self.position = store.normal("embed.position", (cfg.max_position, d), 0.1)
        self.memflag = store.normal("embed.memflag", (2, d), 0.1)
        self.value = ValueEncoder(store, "value", cfg.conv_channels, d)
        self.dummy = store.normal("value.dummy", (d,), 0.1)
        self.mask = store.normal("value.mask", (d,), 0.1)
        self.blocks = [AttentionBlock(store, f"layer{k}", d, cfg.heads, cfg.dropout) for k in range(cfg.layers)]
        self.gate_t = MLP(store, "fusion.gate_t", 2 * d, d, d)
        self.value_t = MLP(store, "fusion.value_t", d, d, d)
        self.gate_a = MLP(store, "fusion.gate_a", 2 * d, d, d)
        self.value_a = MLP(store, "fusion.value_a", d, d, d)
        self.final_norm = LayerNorm(store, "final_norm", d)
        self.head_code = MLP(store, "head.code", d, d, cfg.vocab_size)
        self.head_trace = MLP(store, "head.trace", d, d, 8)
        self.head_dep = MLP(store, "head.dep", 5 * d, d, 1)
        self.head_region = MLP(store, "head.region", d, d, len(REGIONS))
        self.head_signature = {
            side: {name: MLP(store, f"head.{side}.{name}", d, d, k) for name, k in SIGNATURE_HEADS}
            for side in ("caller", "callee")
        }

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> dict:
        return self._store.tensors

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.parameters().values())

    def trace_only_parameters(self) -> list:
        return [n for n in self.parameters() if n.startswith(TRACE_ONLY_PREFIXES)]

    def zero_grad(self) -> None:
        for t in self.parameters().values():
            t.grad = None

    def save(self, directory) -> None:
        save_parameters(self.parameters(), directory)

    def load(self, directory) -> None:
        loaded = load_parameters(directory)
        params = self.parameters()
        if list(loaded) != list(params):
            raise ValueError("checkpoint parameter names do not match this model")
        for name, arr in loaded.items():
            if arr.shape != params[name].shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} != {params[name].shape}")
            params[name].data = arr.astype(np.float64)

    def state(self) -> dict:
        return {n: t.data.copy() for n, t in self.parameters().items()}

    def set_state(self, state: dict) -> None:
        for n, t in self.parameters().items():
            t.data = state[n].copy()

    # -- embeddings ---------------------------------------------------------

    def embed_code(self, ids, positions, memflags) -> Tensor:
        """E(c) + E(p) + E(m) for integer arrays of any matching shape."""
        ids, positions, memflags = (np.asarray(a) for a in (ids, positions, memflags))
        return embedding(self.code, ids) + embedding(self.position, positions) + embedding(self.memflag, memflags)

    def encode_value(self, values) -> Tensor:
        return self.value(values)

    def _value_tables(self, batch: Batch, with_trace: bool, with_addr: bool):
        """Encode every distinct value row once; gather per-token embeddings."""
        rows = []
        if with_trace:
            rows.append(batch.trace[batch.trace_kind == VALUE])
        if with_addr:
            rows.append(batch.addr[~batch.pad])
        stacked = np.concatenate(rows) if rows else np.zeros((0, 8))
        # row 0 dummy, row 1 mask (trace path only), then encoded rows
        parts = [reshape(self.dummy, (1, -1))]
        if with_trace:
            parts.append(reshape(self.mask, (1, -1)))
        base = len(parts)
        inverse = np.zeros(0, dtype=np.int64)
        if len(stacked):
            unique, inverse = np.unique(stacked, axis=0, return_inverse=True)
            parts.append(self.value(unique))
        table = concat(parts, axis=0)
        inverse = inverse.reshape(-1) + base
        out, offset = {}, 0
        if with_trace:
            kind = batch.trace_kind
            idx = np.where(kind == MASKED, 1, 0)
            count = int((kind == VALUE).sum())
            idx[kind == VALUE] = inverse[offset : offset + count]
            offset += count
            out["t"] = getitem(table, idx)
        if with_addr:
            idx = np.zeros(batch.pad.shape, dtype=np.int64)
            count = int((~batch.pad).sum())
            idx[~batch.pad] = inverse[offset : offset + count]
            out["a"] = getitem(table, idx)
        return out

    def fuse(self, hidden: Tensor, e_trace: Tensor | None, e_addr: Tensor | None) -> Tensor:
        """hidden + G_T * MLP(E_T) + G_A * MLP(E_A) with sigmoid gates."""
        out = hidden
        if e_trace is not None:
            gate = sigmoid(self.gate_t(concat([hidden, e_trace], axis=-1)))
            out = out + gate * self.value_t(e_trace)
        if e_addr is not None:
            gate = sigmoid(self.gate_a(concat([hidden, e_addr], axis=-1)))
            out = out + gate * self.value_a(e_addr)
        return out

    # -- encoder ------------------------------------------------------------

    def batch(self, samples) -> Batch:
        return collate(samples, self.config.max_len)

    def encode(self, batch, mode: str = "pretrain", training: bool = False, rng=None) -> Tensor:
        """E^L of shape (b, n, d).

        ``mode="pretrain"`` fuses trace and address embeddings after
        ``fusion_layer`` blocks.  ``mode="static"`` drops the trace path
        and fuses addresses only when ``static_address_fusion`` is set.
        """
        if not isinstance(batch, Batch):
            batch = self.batch(batch)
        if batch.length > self.config.max_len:
            raise ValueError(f"sequence length {batch.length} exceeds the maximum {self.config.max_len}")
        if batch.positions.max(initial=0) >= self.config.max_position:
            raise ValueError(f"operand position exceeds {self.config.max_position - 1}")
        if mode not in ("pretrain", "static"):
            raise ValueError(f"unknown mode {mode!r}")
        with_trace = mode == "pretrain"
        with_addr = with_trace or self.config.static_address_fusion
        bias = padding_bias(batch.pad)
        x = self.embed_code(batch.ids, batch.positions, batch.memflags)
        if self.sequence is not None:
            x = x + Tensor(self.sequence[: batch.length])
        for k, block in enumerate(self.blocks):
            if k == self.config.fusion_layer and (with_trace or with_addr):
                tables = self._value_tables(batch, with_trace, with_addr)
                x = self.fuse(x, tables.get("t"), tables.get("a"))
            x = block(x, bias, rng, training)
        return self.final_norm(x)

    def pool(self, hidden: Tensor, pad: np.ndarray) -> Tensor:
        """Mean over non-padding tokens, shape (b, d)."""
        keep = (~pad).astype(np.float64)
        weights = keep / np.maximum(keep.sum(axis=1, keepdims=True), 1.0)
        return tsum(hidden * Tensor(weights[..., None]), axis=1)

    # -- heads --------------------------------------------------------------

    def forward_pretrain(self, batch, training: bool = False, rng=None):
        """(code logits at MI, value predictions at MT) in batch order."""
        if not isinstance(batch, Batch):
            batch = self.batch(batch)
        hidden = self.encode(batch, "pretrain", training, rng)
        code = self.head_code(getitem(hidden, batch.mi))
        values = self.head_trace(getitem(hidden, batch.mt))
        return code, values

    def dependency_features(self, hidden: Tensor, pad, rows, i, j) -> Tensor:
        rows, i, j = (np.asarray(a, dtype=np.int64) for a in (rows, i, j))
        if np.any(i == j):
            raise ValueError("a dependency pair needs two distinct tokens")
        pooled = getitem(self.pool(hidden, pad), rows)
        ei = getitem(hidden, (rows, i))
        ej = getitem(hidden, (rows, j))
        return concat([pooled, ei, ej, tabs(ei - ej), ei * ej], axis=-1)

    def dependency_logits(self, hidden: Tensor, pad, rows, i, j) -> Tensor:
        feats = self.dependency_features(hidden, pad, rows, i, j)
        return reshape(self.head_dep(feats), (-1,))

    def predict_dependency(self, hidden: Tensor, pad, rows, i, j) -> np.ndarray:
        return sigmoid(self.dependency_logits(hidden, pad, rows, i, j)).data

    def region_logits(self, hidden: Tensor) -> Tensor:
        return self.head_region(hidden)

    def predict_region(self, hidden: Tensor) -> np.ndarray:
        return softmax(self.region_logits(hidden)).data

    def signature_logits(self, hidden: Tensor, pad, side: str, sites=None) -> dict:
        """Five logit tensors (arity, arg1..arg3, ret), one row per sample."""
        if side == "caller":
            if sites is None:
                raise ValueError("caller-side signatures need a call-site index")
            sites = np.asarray(sites, dtype=np.int64)
            feats = getitem(hidden, (np.arange(len(sites)), sites))
        elif side == "callee":
            feats = self.pool(hidden, pad)
        else:
            raise ValueError(f"unknown side {side!r}")
        return {name: head(feats) for name, head in self.head_signature[side].items()}

