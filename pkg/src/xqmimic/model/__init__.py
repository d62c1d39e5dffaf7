"""Structurally configurable move-prediction models."""

from .checkpoint import load, save, vocabulary_digest
from .config import ACTIVATIONS, CANDIDATES, RNN_KINDS, SIMPLER_FIRST, StructureConfig
from .gradcheck import check_all_structures, gradient_check
from .network import (
    EMBED_DIM,
    ModelParameters,
    PredictionDistribution,
    apply_filter,
    build,
    forward,
    forward_batch,
    loss,
    loss_and_grads,
    predict,
    sample_index,
    tensor_layout,
    trainable_names,
)
from .train import (
    EpochStats,
    TrainingHistory,
    TrainingOptions,
    TrainingResult,
    accuracy,
    train,
)

__all__ = [
    "ACTIVATIONS",
    "CANDIDATES",
    "EMBED_DIM",
    "RNN_KINDS",
    "SIMPLER_FIRST",
    "EpochStats",
    "ModelParameters",
    "PredictionDistribution",
    "StructureConfig",
    "TrainingHistory",
    "TrainingOptions",
    "TrainingResult",
    "accuracy",
    "apply_filter",
    "build",
    "check_all_structures",
    "forward",
    "forward_batch",
    "gradient_check",
    "load",
    "loss",
    "loss_and_grads",
    "predict",
    "sample_index",
    "save",
    "tensor_layout",
    "train",
    "trainable_names",
    "vocabulary_digest",
]
