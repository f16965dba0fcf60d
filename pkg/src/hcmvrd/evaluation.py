"""Relation detection (mAP, Recall@K) and relation tagging (Precision@K) metrics."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import DatasetAnnotation, Track, VideoRelation
from .geometry import volume_iou


@dataclass(frozen=True)
class GroundTruthInstance:
    triplet: tuple[str, str, str]
    subject_track: Track
    object_track: Track
    begin_frame: int
    end_frame: int  # exclusive


def ground_truth_instances(ann: DatasetAnnotation) -> list[GroundTruthInstance]:
    trajs = {t.traj_id: t for t in ann.trajectories}
    out = []
    for r in ann.relations:
        s, o = trajs[r.subject], trajs[r.object]
        st = s.track.restrict(r.begin_fid, r.end_fid)
        ot = o.track.restrict(r.begin_fid, r.end_fid)
        if st is None or ot is None:
            continue  # no boxes inside the annotated span
        out.append(GroundTruthInstance((s.category, r.predicate, o.category), st, ot, r.begin_fid, r.end_fid))
    return out


def _fill_gaps(track: Track) -> Track:
    if track.is_contiguous():
        return track
    frames = np.arange(track.first_frame, track.last_frame + 1)
    boxes = np.stack([np.interp(frames, track.frames, track.boxes[:, c]) for c in range(4)], axis=1)
    return Track(frames, boxes)


def ground_truth_as_predictions(ann: DatasetAnnotation, score: float = 1.0) -> list[VideoRelation]:
    """Perfect predictions for ``ann``: one relation per ground-truth instance."""
    out = []
    for g in ground_truth_instances(ann):
        st, ot = _fill_gaps(g.subject_track), _fill_gaps(g.object_track)
        begin = max(st.first_frame, ot.first_frame)
        end = min(st.last_frame, ot.last_frame)
        st, ot = st.restrict(begin, end + 1), ot.restrict(begin, end + 1)
        out.append(VideoRelation(g.triplet[0], g.triplet[1], g.triplet[2], st, ot, begin, end, score))
    return out


def detection_overlap(pred: VideoRelation, gt: GroundTruthInstance) -> float:
    """min(subject vIoU, object vIoU); -1 when the triplets differ."""
    if pred.triplet != gt.triplet:
        return -1.0
    return min(volume_iou(pred.subject_track, gt.subject_track), volume_iou(pred.object_track, gt.object_track))


def match_detection(pred: VideoRelation, gt: GroundTruthInstance, viou_thresh: float = 0.5) -> bool:
    return detection_overlap(pred, gt) >= viou_thresh


def rank_predictions(preds: Sequence[VideoRelation]) -> list[VideoRelation]:
    """Descending score; equal scores keep their input order."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    return [preds[i] for i in order]


def greedy_match(preds: Sequence[VideoRelation], gts: Sequence[GroundTruthInstance], viou_thresh: float) -> np.ndarray:
    """Per ranked prediction, whether it claims a still-unmatched ground truth (best overlap wins)."""
    used = [False] * len(gts)
    hits = np.zeros(len(preds), dtype=bool)
    for i, p in enumerate(preds):
        best, best_j = viou_thresh, -1
        for j, g in enumerate(gts):
            if used[j]:
                continue
            ov = detection_overlap(p, g)
            if ov >= best and (best_j < 0 or ov > best):
                best, best_j = ov, j
        if best_j >= 0:
            used[best_j] = True
            hits[i] = True
    return hits


def average_precision(hits: np.ndarray, num_gt: int) -> float:
    """All-points interpolated area under the precision/recall curve."""
    if num_gt == 0 or len(hits) == 0:
        return 0.0
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / num_gt
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


@dataclass
class EvalReport:
    reldet: dict[str, float]
    reltag: dict[str, float]
    per_video: dict[str, dict[str, float]] = field(default_factory=dict)

    COLUMNS = (("mAP", "reldet", "map"), ("R@50", "reldet", "r50"), ("R@100", "reldet", "r100"),
               ("P@1", "reltag", "p1"), ("P@5", "reltag", "p5"), ("P@10", "reltag", "p10"))

    def row(self) -> list[float]:
        return [getattr(self, group)[key] for _, group, key in self.COLUMNS]

    def to_dict(self) -> dict:
        return {"reldet": self.reldet, "reltag": self.reltag, "per_video": self.per_video}

    def format_table(self, label: str = "model") -> str:
        return format_metric_table([(label, self)])

    def write_json(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def format_metric_table(rows: Sequence[tuple[str, EvalReport]], sep: str = "  ") -> str:
    """Aligned text table, metrics x100 with two decimals."""
    labels = [r[0] for r in rows]
    width = max([len("Model")] + [len(l) for l in labels])
    head = sep.join(["Model".ljust(width)] + [c[0].rjust(6) for c in EvalReport.COLUMNS])
    lines = [head, "-" * len(head)]
    for label, rep in rows:
        lines.append(sep.join([label.ljust(width)] + [f"{100 * v:6.2f}" for v in rep.row()]))
    return "\n".join(lines)


def reldet_eval(
    preds: Mapping[str, Sequence[VideoRelation]],
    gts: Sequence[DatasetAnnotation],
    ks: Sequence[int] = (50, 100),
    viou_thresh: float = 0.5,
) -> tuple[float, dict[int, float], dict[str, dict[str, float]]]:
    """mAP (mean of per-video AP), mean per-video recall@k, and the per-video values.

    Videos without ground-truth relations are left out of every average.
    """
    aps, recalls = [], {k: [] for k in ks}
    per_video: dict[str, dict[str, float]] = {}
    for ann in sorted(gts, key=lambda a: a.video_id):
        gt = ground_truth_instances(ann)
        if not gt:
            continue
        ranked = rank_predictions(list(preds.get(ann.video_id, ())))
        hits = greedy_match(ranked, gt, viou_thresh)
        ap = average_precision(hits, len(gt))
        aps.append(ap)
        entry = {"ap": ap}
        for k in ks:
            rk = float(np.sum(hits[:k])) / len(gt)
            recalls[k].append(rk)
            entry[f"r{k}"] = rk
        per_video[ann.video_id] = entry
    mean = lambda xs: float(np.mean(xs)) if xs else 0.0  # noqa: E731
    return mean(aps), {k: mean(v) for k, v in recalls.items()}, per_video


def reltag_eval(
    preds: Mapping[str, Sequence[VideoRelation]],
    gts: Sequence[DatasetAnnotation],
    ks: Sequence[int] = (1, 5, 10),
) -> tuple[dict[int, float], dict[str, dict[str, float]]]:
    precisions = {k: [] for k in ks}
    per_video: dict[str, dict[str, float]] = {}
    for ann in sorted(gts, key=lambda a: a.video_id):
        gt_labels = {t.triplet for t in ground_truth_instances(ann)}
        if not gt_labels:
            continue
        best: dict[tuple[str, str, str], float] = {}
        for p in preds.get(ann.video_id, ()):
            if p.triplet not in best or p.score > best[p.triplet]:
                best[p.triplet] = p.score
        labels = sorted(best, key=lambda t: -best[t])  # stable: first-seen order on ties
        entry = {}
        for k in ks:
            pk = len(set(labels[:k]) & gt_labels) / k
            precisions[k].append(pk)
            entry[f"p{k}"] = pk
        per_video[ann.video_id] = entry
    return {k: float(np.mean(v)) if v else 0.0 for k, v in precisions.items()}, per_video


def evaluate(
    preds: Mapping[str, Sequence[VideoRelation]],
    gts: Sequence[DatasetAnnotation],
    viou_thresh: float = 0.5,
) -> EvalReport:
    mAP, recall, det_videos = reldet_eval(preds, gts, (50, 100), viou_thresh)
    prec, tag_videos = reltag_eval(preds, gts, (1, 5, 10))
    per_video = {vid: {**det_videos.get(vid, {}), **tag_videos.get(vid, {})} for vid in sorted(set(det_videos) | set(tag_videos))}
    return EvalReport(
        reldet={"map": mAP, "r50": recall[50], "r100": recall[100]},
        reltag={"p1": prec[1], "p5": prec[5], "p10": prec[10]},
        per_video=per_video,
    )
