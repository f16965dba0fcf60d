"""Training loop: batches per video, focal (or BCE) loss, AdamW with a step LR drop."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ..core import DatasetAnnotation
from ..graphs import CooccurrenceTable, compute_cooccurrence
from ..neural.optim import OptimizerState, TrainingDiverged, optimizer_step
from ..neural.params import ModelParams, init_params, load_checkpoint, save_checkpoint
from .batch import ClipBatch, chunk_clips
from .clips import FeatureIndex, derive_targets, segment_clips
from .config import PipelineConfig
from .model import batch_loss, model_dims

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Vocabulary:
    predicates: tuple[str, ...]
    cooccurrence: CooccurrenceTable

    @classmethod
    def from_training(cls, dataset: Sequence[DatasetAnnotation]) -> "Vocabulary":
        predicates = sorted({r.predicate for a in dataset for r in a.relations})
        return cls(tuple(predicates), compute_cooccurrence(dataset))


@dataclass
class TrainResult:
    params: ModelParams
    vocab: Vocabulary
    config: PipelineConfig
    loss_curve: list[tuple[int, int, float]] = field(default_factory=list)

    def epoch_means(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for epoch, _, loss in self.loss_curve:
            by_epoch.setdefault(epoch, []).append(loss)
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


def video_batches(
    ann: DatasetAnnotation,
    index: FeatureIndex,
    vocab: Vocabulary,
    cfg: PipelineConfig,
    with_targets: bool = True,
) -> list[ClipBatch]:
    """Batches of at most ``batch_clips`` consecutive clips; runs without any pair are skipped."""
    clips = segment_clips(ann, index, cfg)
    out = []
    for run in chunk_clips(clips, cfg.training.batch_clips):
        if not any(len(c.tubelets) > 1 for c in run):
            continue
        targets = derive_targets(run, ann, vocab.predicates, cfg) if with_targets else None
        out.append(ClipBatch(ann.video_id, run, vocab.cooccurrence, cfg, targets))
    return out


def train(
    dataset: Sequence[DatasetAnnotation],
    features: FeatureIndex | Mapping[str, np.ndarray],
    cfg: PipelineConfig,
    out_dir: str | os.PathLike | None = None,
    on_step: Callable[[int, int, float], None] | None = None,
) -> TrainResult:
    if not dataset:
        raise ValueError("empty training set")
    index = features if isinstance(features, FeatureIndex) else FeatureIndex(features)
    vocab = Vocabulary.from_training(dataset)
    if not vocab.predicates:
        raise ValueError("training set has no relations")
    batches = [b for ann in dataset for b in video_batches(ann, index, vocab, cfg)]
    if not batches:
        raise ValueError("training set yields no tubelet pairs")

    tcfg = cfg.training
    params = init_params(model_dims(cfg, index.dim, len(vocab.predicates)), tcfg.seed)
    state = OptimizerState(lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    rng = np.random.default_rng(tcfg.seed)
    result = TrainResult(params, vocab, cfg)
    step = 0
    for epoch in range(tcfg.epochs):
        state.lr = tcfg.lr_at(epoch)
        for b in rng.permutation(len(batches)):
            params.zero_grad()
            loss = batch_loss(batches[b], params, cfg)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"diverged: non-finite loss at epoch {epoch}, step {step}")
            loss.backward()
            try:
                optimizer_step(params, state)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"{exc} at epoch {epoch}, step {step}") from None
            result.loss_curve.append((epoch, step, value))
            if on_step is not None:
                on_step(epoch, step, value)
            step += 1
        log.info("epoch %d lr %.2e mean loss %.6f", epoch, state.lr, result.epoch_means()[-1] if result.loss_curve else float("nan"))
    params.zero_grad()

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_trained(result, out / "checkpoint.json")
        write_loss_curve(result.loss_curve, out / "loss.csv")
    return result


def save_trained(result: TrainResult, path: str | os.PathLike) -> None:
    save_checkpoint(
        result.params,
        path,
        extra={
            "config": result.config.to_dict(),
            "predicates": list(result.vocab.predicates),
            "cooccurrence": result.vocab.cooccurrence.to_dict(),
            "seed": result.config.training.seed,
        },
    )


def load_trained(path: str | os.PathLike) -> tuple[ModelParams, Vocabulary, PipelineConfig]:
    params, manifest = load_checkpoint(path)
    vocab = Vocabulary(tuple(manifest["predicates"]), CooccurrenceTable.from_dict(manifest["cooccurrence"]))
    return params, vocab, PipelineConfig.from_dict(manifest["config"])


def write_loss_curve(rows: Sequence[tuple[int, int, float]], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "step", "loss"])
        for epoch, step, loss in rows:
            w.writerow([epoch, step, repr(float(loss))])


def read_loss_curve(path: str | os.PathLike) -> list[tuple[int, int, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["epoch"]), int(r["step"]), float(r["loss"])) for r in csv.DictReader(fh)]
