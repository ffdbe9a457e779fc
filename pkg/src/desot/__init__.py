"""Sequence classification with deep ensembles spread over time."""
__version__ = "0.1.0"

from .calibration import Temperature, apply_temperature, fit_temperature, validation_nll
from .fusion import (CostCounter, MemberSchedule, SequenceSample, StreamingFuser, de_probs,
                     desot_probs, fuse_ensemble, fuse_time, mc_dropout_probs, predict_de,
                     predict_desot, predict_mc_dropout, predict_sm, round_robin_schedule, sm_probs)
from .metrics import EvalReport, accuracy, brier, ece, entropy, evaluate, macro_f1
from .nn import MlpModel, TrainConfig, init_model, load_model, save_model, train
from .ood import OodSplit, evaluate_detection, fit_threshold, split_halves

__all__ = [
    "Temperature", "apply_temperature", "fit_temperature", "validation_nll", "CostCounter",
    "MemberSchedule", "SequenceSample", "StreamingFuser", "de_probs", "desot_probs",
    "fuse_ensemble", "fuse_time", "mc_dropout_probs", "predict_de", "predict_desot",
    "predict_mc_dropout", "predict_sm", "round_robin_schedule", "sm_probs", "EvalReport",
    "accuracy", "brier", "ece", "entropy", "evaluate", "macro_f1", "MlpModel", "TrainConfig",
    "init_model", "load_model", "save_model", "train", "OodSplit", "evaluate_detection",
    "fit_threshold", "split_halves",
]
