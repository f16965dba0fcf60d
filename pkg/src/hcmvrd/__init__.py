"""Clip-based video visual relation detection with hierarchical spatio-temporal context graphs."""

from .association import AssocConfig, associate
from .core import (
    BoundingBox,
    Clip,
    ClipPair,
    ClipRelation,
    DatasetAnnotation,
    Track,
    Tubelet,
    VideoRelation,
    load_dataset,
    load_features,
    write_features,
    write_predictions,
)
from .evaluation import EvalReport, evaluate, reldet_eval, reltag_eval
from .pipeline import PipelineConfig, predict, train

__version__ = "0.1.0"

__all__ = [
    "AssocConfig",
    "BoundingBox",
    "Clip",
    "ClipPair",
    "ClipRelation",
    "DatasetAnnotation",
    "EvalReport",
    "PipelineConfig",
    "Track",
    "Tubelet",
    "VideoRelation",
    "associate",
    "evaluate",
    "load_dataset",
    "load_features",
    "predict",
    "reldet_eval",
    "reltag_eval",
    "train",
    "write_features",
    "write_predictions",
]
