"""Fusion transformer over code tokens, trace values and addresses."""

from .batch import Batch, collate
from .config import KEYS, ConfigError, ModelConfig
from .layers import ParameterStore, ValueEncoder
from .network import REGIONS, RETURN_CLASSES, SIGNATURE_HEADS, TRACE_ONLY_PREFIXES, TYPE_CLASSES, MemDepNet

__all__ = [
    "Batch",
    "ConfigError",
    "KEYS",
    "MemDepNet",
    "ModelConfig",
    "ParameterStore",
    "REGIONS",
    "RETURN_CLASSES",
    "SIGNATURE_HEADS",
    "TRACE_ONLY_PREFIXES",
    "TYPE_CLASSES",
    "ValueEncoder",
    "collate",
]
