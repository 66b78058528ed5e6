"""scikit-learn style wrappers around pretraining, finetuning, probes and the matcher.

The estimators take lists of :class:`~memdep.encoding.Sample` as ``X``;
labels ride on each sample (``deps``/``memory`` for dependencies,
``regions`` for region probes), so ``y`` is accepted and ignored.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .model import REGIONS, MemDepNet, ModelConfig
from .model.network import TRACE_ONLY_PREFIXES
from .seeding import stream_seed
from .train import (
    FinetuneConfig,
    MatchPolicy,
    PretrainConfig,
    ProbeConfig,
    evaluate_dependencies,
    finetune_dependency,
    pretrain,
    resolve_targets,
    score_windows,
    train_region_probe,
)
from .train.probes import encode_frozen, region_targets
from .validation import (
    check_choice,
    check_fraction,
    check_is_fitted,
    check_positive,
    check_positive_int,
    check_samples,
)


class _ModelParams:
    """Shared architecture hyperparameters."""

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            d=check_positive_int(self.d, "d"),
            layers=check_positive_int(self.layers, "layers"),
            fusion_layer=self.fusion_layer,
            heads=check_positive_int(self.heads, "heads"),
            conv_channels=(check_positive_int(self.conv_channels, "conv_channels"),) * 8,
            static_address_fusion=self.static_address_fusion,
        )


class MemDepPretrainer(_ModelParams, TransformerMixin, BaseEstimator):
    """Masked pretraining; ``transform`` returns mean-pooled static embeddings."""

    def __init__(self, d=128, layers=8, fusion_layer=1, heads=8, conv_channels=16, static_address_fusion=True,
                 epochs=10, lr=1e-4, batch_size=16, lower=0.2, upper=0.8, alpha=100.0, seed=0):
        self.d = d
        self.layers = layers
        self.fusion_layer = fusion_layer
        self.heads = heads
        self.conv_channels = conv_channels
        self.static_address_fusion = static_address_fusion
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.lower = lower
        self.upper = upper
        self.alpha = alpha
        self.seed = seed

    def fit(self, X, y=None):
        samples = check_samples(X)
        check_fraction(self.lower, "lower")
        check_fraction(self.upper, "upper")
        config = PretrainConfig(
            epochs=check_positive_int(self.epochs, "epochs"),
            lower=self.lower,
            upper=self.upper,
            batch_size=check_positive_int(self.batch_size, "batch_size"),
            lr=check_positive(self.lr, "lr"),
            alpha=check_positive(self.alpha, "alpha"),
        )
        self.model_ = MemDepNet(self._model_config(), seed=stream_seed(self.seed, "init"))
        result = pretrain(self.model_, samples, config, seed=self.seed)
        self.loss_curve_ = result.losses
        self.audit_ = result.audit
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return np.stack([pooled for _, pooled in encode_frozen(self.model_, check_samples(X))])


class DependencyClassifier(_ModelParams, ClassifierMixin, BaseEstimator):
    """Pairwise memory-dependence classifier over candidate instruction pairs.

    ``predict`` returns, per sample, the set of window-local instruction index
    pairs scored at or above ``threshold``.  ``init_model`` may carry a
    pretrained :class:`MemDepNet` (for example ``MemDepPretrainer().model_``).
    """

    def __init__(self, d=128, layers=8, fusion_layer=1, heads=8, conv_channels=16, static_address_fusion=True,
                 epochs=20, lr=1e-4, batch_size=16, negative_ratio=3, threshold=0.5, init_model=None, seed=0):
        self.d = d
        self.layers = layers
        self.fusion_layer = fusion_layer
        self.heads = heads
        self.conv_channels = conv_channels
        self.static_address_fusion = static_address_fusion
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.negative_ratio = negative_ratio
        self.threshold = threshold
        self.init_model = init_model
        self.seed = seed

    def fit(self, X, y=None):
        samples = check_samples(X, require_labels=("memory", "deps"))
        config = FinetuneConfig(
            epochs=check_positive_int(self.epochs, "epochs"),
            batch_size=check_positive_int(self.batch_size, "batch_size"),
            lr=check_positive(self.lr, "lr"),
            negative_ratio=check_positive_int(self.negative_ratio, "negative_ratio"),
        )
        if self.init_model is not None:
            self.model_ = MemDepNet(self.init_model.config)
            self.model_.set_state(self.init_model.state())
        else:
            self.model_ = MemDepNet(self._model_config(), seed=stream_seed(self.seed, "init"))
        self.loss_curve_ = finetune_dependency(self.model_, samples, config, seed=self.seed).losses
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> list:
        check_is_fitted(self, "model_")
        return score_windows(self.model_, check_samples(X, require_labels=("memory",)))

    def predict(self, X) -> list:
        t = check_fraction(self.threshold, "threshold")
        return [{p for p, s in scores.items() if s >= t} for scores in self.predict_proba(X)]

    def score(self, X, y=None) -> float:
        """F1 of predicted pairs against ``labels['deps']`` pooled over samples."""
        samples = check_samples(X, require_labels=("memory", "deps"))
        predicted, reference = set(), set()
        for k, (s, pairs) in enumerate(zip(samples, self.predict(samples))):
            predicted |= {(k, i, j) for i, j in pairs}
            reference |= {(k, i, j) for i, j in s.labels["deps"]}
        return evaluate_dependencies(predicted, reference).f1


class RegionClassifier(BaseEstimator, ClassifierMixin):
    """Region probe on a frozen encoder; predicts one class name per labelled instruction."""

    def __init__(self, encoder=None, epochs=30, lr=1e-4, batch_size=16, seed=0):
        self.encoder = encoder
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y=None):
        samples = check_samples(X, require_labels=("regions",))
        if self.encoder is None:
            raise ValueError("RegionClassifier needs a MemDepNet encoder")
        self.model_ = MemDepNet(self.encoder.config)
        self.model_.set_state(self.encoder.state())
        config = ProbeConfig(
            epochs=check_positive_int(self.epochs, "epochs"),
            batch_size=check_positive_int(self.batch_size, "batch_size"),
            lr=check_positive(self.lr, "lr"),
        )
        self.loss_curve_ = train_region_probe(self.model_, samples, config, seed=self.seed).losses
        self.classes_ = np.array(REGIONS)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        samples = check_samples(X, require_labels=("regions",))
        feats, _ = region_targets(samples, encode_frozen(self.model_, samples))
        return self.classes_[self.model_.predict_region(_tensor(feats)).argmax(-1)]

    def score(self, X, y=None) -> float:
        samples = check_samples(X, require_labels=("regions",))
        truth = np.array([REGIONS[r] for s in samples for _, r in s.labels["regions"]])
        return float((self.predict(samples) == truth).mean())


class IndirectCallMatcher(BaseEstimator):
    """Candidate callees per call site from signatures; ``fit`` takes {name: SignatureRecord}."""

    def __init__(self, arity="strict", use_return=True, use_args=True, required=3):
        self.arity = arity
        self.use_return = use_return
        self.use_args = use_args
        self.required = required

    def fit(self, X, y=None):
        if not isinstance(X, dict) or not X:
            raise ValueError("fit expects a non-empty {function: SignatureRecord} mapping")
        check_choice(self.arity, ("loose", "strict"), "arity")
        check_choice(self.required, (2, 3), "required")
        self.functions_ = dict(X)
        self.policy_ = MatchPolicy(self.arity, bool(self.use_return), bool(self.use_args), self.required)
        return self

    def predict(self, X) -> dict:
        check_is_fitted(self, "functions_")
        return resolve_targets(dict(X), self.functions_, self.policy_)


def _tensor(x):
    from .autodiff import Tensor

    return Tensor(x)


__all__ = [
    "DependencyClassifier",
    "IndirectCallMatcher",
    "MemDepPretrainer",
    "RegionClassifier",
    "TRACE_ONLY_PREFIXES",
]
