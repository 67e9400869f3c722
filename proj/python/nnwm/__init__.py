"""Watermark embedding, extraction and attacks for small conv nets."""

from ._nnwm import (
    AttackReport,
    ConfigError,
    DataError,
    Dataset,
    DetectionStats,
    EpochStats,
    HostModel,
    Message,
    NumericError,
    SweepPoint,
    TrainResult,
    WatermarkKey,
    attack_finetune,
    attack_overwrite,
    attack_prune,
    attack_prune_sweep,
    ber,
    build_host,
    embed_posthoc,
    embedding_loss,
    evaluate_error,
    extract,
    extract_from_model,
    flatten_target,
    grad_check,
    load_checkpoint,
    load_cifar10,
    make_key,
    make_synthetic,
    make_synthetic_pair,
    save_checkpoint,
    train,
)

__all__ = [
    "AttackReport",
    "ConfigError",
    "DataError",
    "Dataset",
    "DetectionStats",
    "EpochStats",
    "HostModel",
    "Message",
    "NumericError",
    "SweepPoint",
    "TrainResult",
    "WatermarkKey",
    "attack_finetune",
    "attack_overwrite",
    "attack_prune",
    "attack_prune_sweep",
    "ber",
    "build_host",
    "embed_posthoc",
    "embedding_loss",
    "evaluate_error",
    "extract",
    "extract_from_model",
    "flatten_target",
    "grad_check",
    "load_checkpoint",
    "load_cifar10",
    "make_key",
    "make_synthetic",
    "make_synthetic_pair",
    "save_checkpoint",
    "train",
]
