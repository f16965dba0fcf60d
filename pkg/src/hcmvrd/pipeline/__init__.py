from .batch import ClipBatch, chunk_clips
from .clips import FeatureIndex, clip_windows, derive_targets, encode_appearance, segment_clips
from .config import ConfigError, PipelineConfig, TrainingConfig, load_config
from .model import batch_loss, forward, forward_logits, model_dims
from .predict import load_clip_relations, predict, predict_video, save_clip_relations
from .train import TrainResult, Vocabulary, load_trained, save_trained, train, video_batches, write_loss_curve

__all__ = [
    "ClipBatch",
    "ConfigError",
    "FeatureIndex",
    "PipelineConfig",
    "TrainResult",
    "TrainingConfig",
    "Vocabulary",
    "batch_loss",
    "chunk_clips",
    "clip_windows",
    "derive_targets",
    "encode_appearance",
    "forward",
    "forward_logits",
    "load_clip_relations",
    "load_config",
    "load_trained",
    "model_dims",
    "predict",
    "predict_video",
    "save_clip_relations",
    "save_trained",
    "segment_clips",
    "train",
    "video_batches",
    "write_loss_curve",
]
