"""Pretraining, dependency finetuning, probes, indirect-call matching and evaluation."""

from .data import function_samples, function_windows, region_ids, signature_samples, token_counts
from .finetune import FinetuneConfig, FinetuneResult, candidate_pairs, finetune_dependency, labeled_pairs, score_windows
from .losses import ALPHA, dependency_loss, pretrain_loss
from .matcher import MatchPolicy, SignatureRecord, match_indirect_call, policy_grid, resolve_targets
from .metrics import EvalReport, accuracy, evaluate_dependencies, format_sweep, macro_f1, threshold_sweep
from .pipeline import PipelineResult, predict_pipeline
from .pretrain import EpochAudit, PretrainConfig, PretrainResult, audit_masking, pretrain
from .probes import (
    ProbeConfig,
    ProbeResult,
    evaluate_region_probe,
    evaluate_signature_probe,
    predict_signatures,
    train_region_probe,
    train_signature_probe,
)

__all__ = [
    "ALPHA",
    "EpochAudit",
    "EvalReport",
    "FinetuneConfig",
    "FinetuneResult",
    "MatchPolicy",
    "PipelineResult",
    "PretrainConfig",
    "PretrainResult",
    "ProbeConfig",
    "ProbeResult",
    "SignatureRecord",
    "accuracy",
    "audit_masking",
    "candidate_pairs",
    "dependency_loss",
    "evaluate_dependencies",
    "evaluate_region_probe",
    "evaluate_signature_probe",
    "finetune_dependency",
    "format_sweep",
    "function_samples",
    "function_windows",
    "labeled_pairs",
    "macro_f1",
    "match_indirect_call",
    "policy_grid",
    "predict_pipeline",
    "predict_signatures",
    "pretrain",
    "pretrain_loss",
    "resolve_targets",
    "score_windows",
    "threshold_sweep",
    "region_ids",
    "signature_samples",
    "token_counts",
    "train_region_probe",
    "train_signature_probe",
]
