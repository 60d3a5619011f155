"""Dynamic facial-expression intensity features and a recurrent PD/HC screening classifier."""

__version__ = "0.1.0"

from .classifier import ClassifierTrainConfig, RecurrentClassifier, RnnConfig, predict, rnn_forward, train_classifier
from .expression_model import (
    ClassPrompt,
    ExpressionLabel,
    ExpressionModel,
    ExpressionModelConfig,
    ExpressionTrainConfig,
    FrameSequence,
    class_scores,
    evaluate_expression,
    extract_intensity_record,
    intensity,
    sample_frames,
    train_expression_model,
)
from .features import Diagnosis, GroupStats, IntensityRecord, assemble_sequence, group, group_stats, process_record

__all__ = [
    "ClassPrompt",
    "ClassifierTrainConfig",
    "Diagnosis",
    "ExpressionLabel",
    "ExpressionModel",
    "ExpressionModelConfig",
    "ExpressionTrainConfig",
    "FrameSequence",
    "GroupStats",
    "IntensityRecord",
    "RecurrentClassifier",
    "RnnConfig",
    "assemble_sequence",
    "class_scores",
    "evaluate_expression",
    "extract_intensity_record",
    "group",
    "group_stats",
    "intensity",
    "predict",
    "process_record",
    "rnn_forward",
    "sample_frames",
    "train_classifier",
    "train_expression_model",
]
