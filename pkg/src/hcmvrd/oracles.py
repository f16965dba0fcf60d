"""Slow, independent reference implementations used only to cross-check the fast code.

They avoid the vectorised helpers of the library on purpose: boxes are
rasterised or walked frame by frame with plain Python containers.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .core import ClipRelation, DatasetAnnotation, Track, VideoRelation

MAX_CLIPS = 6
MAX_PAIRS_PER_CLIP = 4
MAX_EVAL_PREDS = 5
MAX_EVAL_GT = 3


def pixel_iou(a: Sequence[int], b: Sequence[int], resolution: int = 1) -> float:
    """IoU by counting unit grid cells (or ``1/resolution`` sub-cells) covered by each box."""
    s = resolution
    a = [int(round(v * s)) for v in a]
    b = [int(round(v * s)) for v in b]
    lo_x, lo_y = min(a[0], b[0]), min(a[1], b[1])
    hi_x, hi_y = max(a[2], b[2]), max(a[3], b[3])
    xs = np.arange(lo_x, hi_x) + 0.5
    ys = np.arange(lo_y, hi_y) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    in_a = (gx > a[0]) & (gx < a[2]) & (gy > a[1]) & (gy < a[3])
    in_b = (gx > b[0]) & (gx < b[2]) & (gy > b[1]) & (gy < b[3])
    union = int(np.count_nonzero(in_a | in_b))
    return int(np.count_nonzero(in_a & in_b)) / union if union else 0.0


def _box_area(b) -> float:
    return (b[2] - b[0]) * (b[3] - b[1])


def _box_inter(a, b) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    return w * h if w > 0 and h > 0 else 0.0


def _frames(track) -> dict[int, list[float]]:
    if isinstance(track, Mapping):
        return {int(f): list(map(float, b)) for f, b in track.items()}
    if not isinstance(track, Track):
        track = track.track
    return track.to_mapping()


def volume_iou_frames(a, b, shared_only: bool = False) -> float:
    """Volume IoU by walking frames one at a time with dictionaries."""
    fa, fb = _frames(a), _frames(b)
    shared = sorted(set(fa) & set(fb))
    inter = 0.0
    for f in shared:
        inter += _box_inter(fa[f], fb[f])
    keys_a = shared if shared_only else sorted(fa)
    keys_b = shared if shared_only else sorted(fb)
    total = sum(_box_area(fa[f]) for f in keys_a) + sum(_box_area(fb[f]) for f in keys_b) - inter
    return inter / total if total > 0 else 0.0


def _box_iou(a, b) -> float:
    i = _box_inter(a, b)
    u = _box_area(a) + _box_area(b) - i
    return i / u if u > 0 else 0.0


# ---------------------------------------------------------------------------
# association


def _tube_overlap(prev, new) -> float:
    fp, fn = _frames(prev.track), _frames(new.track)
    if set(fp) & set(fn):
        return volume_iou_frames(fp, fn, shared_only=True)
    return _box_iou(fp[max(fp)], fn[min(fn)])


def _compatible(last: ClipRelation, gap: int, r: ClipRelation, mode: str, theta: float) -> bool:
    a, b = last.pair, r.pair
    same_label = (a.subject.category, last.predicate, a.object.category) == (b.subject.category, r.predicate, b.object.category)
    if not same_label:
        return False
    if mode == "vlink":
        return gap == 1 and (a.subject.source_trajectory_id, a.object.source_trajectory_id) == (
            b.subject.source_trajectory_id,
            b.object.source_trajectory_id,
        )
    allowed = (1, 2) if mode == "relaxed" else (1,)
    if gap not in allowed:
        return False
    return _tube_overlap(a.subject, b.subject) >= theta and _tube_overlap(a.object, b.object) >= theta


def brute_force_associate(clip_relations: Sequence[ClipRelation], mode: str = "greedy", theta: float = 0.5) -> list[list[ClipRelation]]:
    """Chains built by enumerating, for every relation, every open chain it could join.

    Returns the member lists of the chains in creation order. Raises on
    instances larger than the oracle is meant for.
    """
    rels = list(clip_relations)
    clips = sorted({r.clip_index for r in rels})
    if len(clips) > MAX_CLIPS:
        raise ValueError("instance too large: too many clips")
    for k in clips:
        pairs = {r.pair.pair_id for r in rels if r.clip_index == k}
        if len(pairs) > MAX_PAIRS_PER_CLIP:
            raise ValueError("instance too large: too many pairs in a clip")

    chains: list[dict] = []  # {"members": [...], "id": creation index}
    reach = 2 if mode == "relaxed" else 1
    for k in range(clips[0], clips[-1] + 1) if clips else ():
        here = [r for r in rels if r.clip_index == k]
        here.sort(key=lambda r: (-r.score, r.pair.subject.tubelet_id, r.pair.object.tubelet_id, r.predicate))
        taken = set()
        for r in here:
            candidates = []
            for ch in chains:
                last = ch["members"][-1]
                gap = k - last.clip_index
                if ch["id"] in taken or not 1 <= gap <= reach:
                    continue
                if _compatible(last, gap, r, mode, theta):
                    scores = [m.score for m in ch["members"]]
                    mean = sum(scores) / len(scores)
                    first = ch["members"][0].clip_index
                    candidates.append(((-mean, first, last.pair.subject.tubelet_id, last.pair.object.tubelet_id, ch["id"]), ch))
            if candidates:
                candidates.sort(key=lambda c: c[0])
                best = candidates[0][1]
                best["members"].append(r)
                taken.add(best["id"])
            else:
                ch = {"members": [r], "id": len(chains)}
                chains.append(ch)
                taken.add(ch["id"])
    return [ch["members"] for ch in chains]


# ---------------------------------------------------------------------------
# detection metrics


def _gt_tracks(ann: DatasetAnnotation):
    trajs = {t.traj_id: t for t in ann.trajectories}
    out = []
    for r in ann.relations:
        s, o = trajs[r.subject], trajs[r.object]
        sf = {f: b for f, b in s.track.to_mapping().items() if r.begin_fid <= f < r.end_fid}
        of = {f: b for f, b in o.track.to_mapping().items() if r.begin_fid <= f < r.end_fid}
        if sf and of:
            out.append(((s.category, r.predicate, o.category), sf, of))
    return out


def _match_count(preds: Sequence[VideoRelation], gts, thresh: float) -> tuple[int, list[bool]]:
    used = set()
    hits = []
    for p in preds:
        best, best_j = None, None
        for j, (triplet, sf, of) in enumerate(gts):
            if j in used or triplet != p.triplet:
                continue
            ov = min(volume_iou_frames(p.subject_track, sf), volume_iou_frames(p.object_track, of))
            if ov >= thresh and (best is None or ov > best):
                best, best_j = ov, j
        hits.append(best_j is not None)
        if best_j is not None:
            used.add(best_j)
    return sum(hits), hits


def exhaustive_reldet(pred_list: Sequence[VideoRelation], ann: DatasetAnnotation, ks=(50, 100), thresh: float = 0.5) -> dict:
    """AP and recall@k of one video, recomputing the matching for every prefix of the ranking.

    The area is accumulated with exact fractions from the precision envelope.
    """
    gts = _gt_tracks(ann)
    if len(pred_list) > MAX_EVAL_PREDS or len(gts) > MAX_EVAL_GT:
        raise ValueError("instance too large")
    order = sorted(range(len(pred_list)), key=lambda i: (-pred_list[i].score, i))
    ranked = [pred_list[i] for i in order]
    g = len(gts)
    points = []  # (recall, precision) after each cutoff
    for n in range(1, len(ranked) + 1):
        tp, _ = _match_count(ranked[:n], gts, thresh)
        points.append((Fraction(tp, g) if g else Fraction(0), Fraction(tp, n)))
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for recall in sorted({r for r, _ in points}):
        if recall == prev_recall:
            continue
        envelope = max(p for r, p in points if r >= recall)
        ap += (recall - prev_recall) * envelope
        prev_recall = recall
    out = {"ap": ap, "hits": _match_count(ranked, gts, thresh)[1]}
    for k in ks:
        tp, _ = _match_count(ranked[:k], gts, thresh)
        out[f"r{k}"] = Fraction(tp, g) if g else Fraction(0)
    return out
