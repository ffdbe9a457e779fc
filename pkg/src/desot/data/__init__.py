"""Datasets, synthetic data, and corruptions."""
from .augment import (KINDS, MAX_SEVERITY, AugmentationSpec, SweepCell, apply_augmentation,
                      augment_sequences, severity_sweep)
from .io import (DatasetFormatError, FrameDataset, SequenceDataset, filter_classes,
                 holdout_ood_classes, load_dataset, load_sequences, save_dataset, save_sequences,
                 stratified_split)
from .synth import GlyphStyle, Jitter, generate_glyph_dataset, synthesize_sequences

__all__ = [
    "KINDS", "MAX_SEVERITY", "AugmentationSpec", "SweepCell", "apply_augmentation",
    "augment_sequences", "severity_sweep", "DatasetFormatError", "FrameDataset",
    "SequenceDataset", "filter_classes", "holdout_ood_classes", "load_dataset",
    "load_sequences", "save_dataset", "save_sequences", "stratified_split", "GlyphStyle",
    "Jitter", "generate_glyph_dataset", "synthesize_sequences",
]
