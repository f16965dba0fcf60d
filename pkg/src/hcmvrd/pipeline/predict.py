"""Per-clip relation prediction and the clip-relation JSON interchange file."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..core import ClipPair, ClipRelation, DatasetAnnotation, Track, Tubelet
from ..neural.params import ModelParams
from .clips import FeatureIndex
from .config import PipelineConfig
from .model import forward
from .train import Vocabulary, video_batches


def predict_video(
    ann: DatasetAnnotation,
    index: FeatureIndex,
    params: ModelParams,
    vocab: Vocabulary,
    cfg: PipelineConfig,
    top_k: int | None = None,
) -> list[ClipRelation]:
    """Top-k predicates of every ordered pair, scores non-increasing within a pair."""
    k = min(top_k or cfg.top_k, len(vocab.predicates))
    out: list[ClipRelation] = []
    for batch in video_batches(ann, index, vocab, cfg, with_targets=False):
        scores = forward(batch, params).data
        for row, pair in enumerate(batch.pairs):
            order = np.argsort(-scores[row], kind="stable")[:k]
            for p in order:
                out.append(ClipRelation(pair, vocab.predicates[p], float(scores[row, p])))
    return out


def predict(
    dataset: Sequence[DatasetAnnotation],
    features: FeatureIndex | Mapping[str, np.ndarray],
    params: ModelParams,
    vocab: Vocabulary,
    cfg: PipelineConfig,
    top_k: int | None = None,
    jobs: int = 1,
) -> dict[str, list[ClipRelation]]:
    index = features if isinstance(features, FeatureIndex) else FeatureIndex(features)

    def run(ann):
        return ann.video_id, predict_video(ann, index, params, vocab, cfg, top_k)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, dataset))
    else:
        results = [run(a) for a in dataset]
    return dict(results)


# ---------------------------------------------------------------------------
# clip-relation interchange: per video, the tubelets of every clip and the
# scored (subject, object, predicate) triples that refer to them


def clip_relations_to_dict(video_id: str, relations: Sequence[ClipRelation]) -> dict:
    tubelets: dict[str, Tubelet] = {}
    for r in relations:
        for t in (r.pair.subject, r.pair.object):
            tubelets.setdefault(t.tubelet_id, t)
    return {
        "video_id": video_id,
        "tubelets": [
            {
                "id": t.tubelet_id,
                "category": t.category,
                "clip": t.clip_index,
                "source": t.source_trajectory_id,
                "start_frame": t.track.first_frame,
                "boxes": t.boxes.tolist(),
            }
            for t in tubelets.values()
        ],
        "relations": [
            {"subject": r.pair.subject.tubelet_id, "object": r.pair.object.tubelet_id, "predicate": r.predicate, "score": r.score}
            for r in relations
        ],
    }


def clip_relations_from_dict(doc: Mapping) -> tuple[str, list[ClipRelation]]:
    tubelets = {}
    for t in doc["tubelets"]:
        boxes = np.array(t["boxes"], dtype=np.float64)
        frames = np.arange(t["start_frame"], t["start_frame"] + len(boxes))
        tubelets[t["id"]] = Tubelet(t["id"], t["category"], int(t["clip"]), Track(frames, boxes), np.zeros(0), t.get("source"))
    rels = []
    for r in doc["relations"]:
        s, o = tubelets[r["subject"]], tubelets[r["object"]]
        rels.append(ClipRelation(ClipPair(s.clip_index, s, o), r["predicate"], float(r["score"])))
    return doc["video_id"], rels


def save_clip_relations(predictions: Mapping[str, Sequence[ClipRelation]], path: str | os.PathLike) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for vid in sorted(predictions):
        with open(path / f"{vid}.json", "w", encoding="utf-8") as fh:
            json.dump(clip_relations_to_dict(vid, predictions[vid]), fh, separators=(",", ":"))


def load_clip_relations(path: str | os.PathLike) -> dict[str, list[ClipRelation]]:
    out = {}
    for f in sorted(Path(path).glob("*.json")):
        if f.name == "manifest.json":
            continue
        with open(f, encoding="utf-8") as fh:
            vid, rels = clip_relations_from_dict(json.load(fh))
        out[vid] = rels
    return out
