"""Model inputs: code tuples, trace bytes, address bytes, masking, curriculum."""

from .dataset import read_samples, write_samples
from .masking import MODES, curriculum_rate, mask_count, mask_sample, unmask
from .sample import MAX_LEN, STRIDE, Sample, build_sample, from_tokens, order_by_length, windows
from .tokenize import CodeTokens, tokenize
from .values import (
    DUMMY,
    SENTINEL,
    AlignmentError,
    bytes_value,
    encode_addresses,
    encode_trace,
    value_bytes,
)
from .vocab import CONST_ID, MASK_ID, PAD_ID, UNK_ID, Vocabulary

__all__ = [
    "AlignmentError",
    "CONST_ID",
    "CodeTokens",
    "DUMMY",
    "MASK_ID",
    "MAX_LEN",
    "MODES",
    "PAD_ID",
    "SENTINEL",
    "STRIDE",
    "Sample",
    "UNK_ID",
    "Vocabulary",
    "build_sample",
    "bytes_value",
    "curriculum_rate",
    "encode_addresses",
    "encode_trace",
    "from_tokens",
    "mask_count",
    "mask_sample",
    "order_by_length",
    "read_samples",
    "tokenize",
    "unmask",
    "value_bytes",
    "windows",
    "write_samples",
]
