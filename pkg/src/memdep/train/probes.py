from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Adam, Tensor, cross_entropy, no_grad
from ..model.network import REGIONS, RETURN_CLASSES, SIGNATURE_HEADS, TYPE_CLASSES
from ..seeding import stream
from .metrics import accuracy, macro_f1


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-4


@dataclass
class ProbeResult:
    losses: list = field(default_factory=list)
    scores: dict = field(default_factory=dict)  # head -> (accuracy, macro F1)


def encode_frozen(model, samples, batch_size: int = 16) -> list:
    """Static E^L per sample (unpadded, no graph) and the mean-pooled vector."""
    out = []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            batch = model.batch(chunk)
            hidden = model.encode(batch, "static")
            pooled = model.pool(hidden, batch.pad).data
            for k, s in enumerate(chunk):
                out.append((hidden.data[k, : len(s)], pooled[k]))
    return out


def _fit(heads, features, targets, config, seed):
    """Minimise summed per-head cross-entropy on fixed features."""
    params = [t for h in heads.values() for lin in (h.first, h.second) for t in (lin.weight, lin.bias)]
    opt = Adam(params, lr=config.lr)
    rng = stream(seed, "sampling")
    n = len(features)
    losses = []
    for _ in range(config.epochs):
        for idx in np.array_split(rng.permutation(n), max(1, -(-n // config.batch_size))):
            opt.zero_grad()
            x = Tensor(features[idx])
            loss = None
            for name, head in heads.items():
                y = targets[name][idx]
                keep = y >= 0
                if not keep.any():
                    continue
                term = cross_entropy(head(Tensor(x.data[keep])), y[keep]) * (1.0 / len(idx))
                loss = term if loss is None else loss + term
            if loss is None:
                continue
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
    return losses


def region_targets(samples, encoded):
    feats, labels = [], []
    for s, (hidden, _) in zip(samples, encoded):
        anchors = s.anchors()
        for idx, region in s.labels.get("regions", []):
            if not 0 <= region < len(REGIONS):
                raise ValueError(f"region class {region} outside 0..{len(REGIONS) - 1}")
            feats.append(hidden[anchors[idx]])
            labels.append(region)
    if not feats:
        raise ValueError("no region labels")
    return np.array(feats), np.array(labels)


def train_region_probe(model, samples, config: ProbeConfig | None = None, seed: int = 0) -> ProbeResult:
    config = config or ProbeConfig()
    feats, labels = region_targets(samples, encode_frozen(model, samples))
    result = ProbeResult(_fit({"region": model.head_region}, feats, {"region": labels}, config, seed))
    result.scores["region"] = evaluate_region_probe(model, samples)["region"]
    return result


def evaluate_region_probe(model, samples) -> dict:
    feats, labels = region_targets(samples, encode_frozen(model, samples))
    with no_grad():
        pred = model.head_region(Tensor(feats)).data.argmax(-1)
    return {"region": (accuracy(labels, pred), macro_f1(labels, pred, range(len(REGIONS))))}


def signature_classes(sig) -> list:
    """[arity, arg1, arg2, arg3, ret] class ids, -1 for absent arguments."""
    args = [TYPE_CLASSES.index(a) if a is not None else -1 for a in sig.args]
    return [sig.arity] + args + [RETURN_CLASSES.index(sig.ret)]


def signature_targets(model, samples, side):
    """Features and class ids; caller samples carry ``labels['site']`` (token index)."""
    encoded = encode_frozen(model, samples)
    feats, rows = [], []
    for s, (hidden, pooled) in zip(samples, encoded):
        if side == "caller":
            if "site" not in s.labels:
                raise ValueError("caller-side sample without a call site")
            feats.append(hidden[s.labels["site"]])
        else:
            feats.append(pooled)
        rows.append(s.labels["signature"])
    rows = np.array(rows, dtype=np.int64)
    return np.array(feats), {name: rows[:, k] for k, (name, _) in enumerate(SIGNATURE_HEADS)}


def train_signature_probe(model, samples, side: str, config: ProbeConfig | None = None, seed: int = 0) -> ProbeResult:
    config = config or ProbeConfig()
    feats, targets = signature_targets(model, samples, side)
    result = ProbeResult(_fit(model.head_signature[side], feats, targets, config, seed))
    result.scores = evaluate_signature_probe(model, samples, side)
    return result


def predict_signatures(model, samples, side: str) -> np.ndarray:
    feats, _ = signature_targets(model, samples, side)
    with no_grad():
        cols = [h(Tensor(feats)).data.argmax(-1) for h in model.head_signature[side].values()]
    return np.stack(cols, axis=1)


def evaluate_signature_probe(model, samples, side: str) -> dict:
    _, targets = signature_targets(model, samples, side)
    pred = predict_signatures(model, samples, side)
    scores = {}
    for k, (name, classes) in enumerate(SIGNATURE_HEADS):
        y = targets[name]
        keep = y >= 0
        scores[name] = (accuracy(y[keep], pred[keep, k]), macro_f1(y[keep], pred[keep, k], range(classes)))
    return scores
