"""Clip segmentation, tubelet appearance encoding and per-clip supervision targets."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..core import Clip, DatasetAnnotation, Track, Tubelet
from .config import PipelineConfig


def clip_windows(frame_count: int, clip_length: int, stride: int) -> list[tuple[int, int]]:
    """Inclusive ``(start, end)`` windows of ``clip_length`` frames every ``stride`` frames.

    Trailing frames that do not fill a whole window are dropped; a video shorter
    than one window yields a single window that runs past the last frame.
    """
    if frame_count <= clip_length:
        return [(0, clip_length - 1)]
    return [(s, s + clip_length - 1) for s in range(0, frame_count - clip_length + 1, stride)]


def encode_appearance(frame_features: np.ndarray) -> np.ndarray:
    frame_features = np.asarray(frame_features, dtype=np.float64)
    if frame_features.ndim != 2 or len(frame_features) == 0:
        raise ValueError("need a non-empty (frames, D) feature array")
    return frame_features.mean(axis=0)


class FeatureIndex:
    """Per-trajectory feature lookup.

    Keys are ``"<video>/<traj>/<frame>"`` for per-frame features or
    ``"<video>/<traj>"`` for one feature per trajectory.
    """

    def __init__(self, features: Mapping[str, np.ndarray]):
        per_frame: dict[tuple[str, str], list[tuple[int, np.ndarray]]] = {}
        self.whole: dict[tuple[str, str], np.ndarray] = {}
        dims = set()
        for key, vec in features.items():
            parts = key.rsplit("/", 2)
            vec = np.asarray(vec, dtype=np.float64)
            dims.add(vec.size)
            if len(parts) == 3 and parts[2].lstrip("-").isdigit():
                per_frame.setdefault((parts[0], parts[1]), []).append((int(parts[2]), vec))
            else:
                vid, _, tid = key.partition("/")
                self.whole[(vid, tid)] = vec
        if len(dims) > 1:
            raise ValueError(f"mixed feature dimensions {sorted(dims)}")
        self.dim = dims.pop() if dims else 0
        self.frames: dict[tuple[str, str], np.ndarray] = {}
        self.vectors: dict[tuple[str, str], np.ndarray] = {}
        for k, rows in per_frame.items():
            rows.sort(key=lambda r: r[0])
            self.frames[k] = np.array([r[0] for r in rows], dtype=np.int64)
            self.vectors[k] = np.stack([r[1] for r in rows])

    def appearance(self, video_id: str, traj_id: str, start: int, end: int) -> np.ndarray:
        """Mean feature over frames in ``[start, end]``, falling back to the trajectory feature."""
        k = (video_id, traj_id)
        if k in self.frames:
            frames = self.frames[k]
            mask = (frames >= start) & (frames <= end)
            if mask.any():
                return encode_appearance(self.vectors[k][mask])
        if k in self.whole:
            return self.whole[k]
        if k in self.frames:
            # nearest keyframe when none falls inside the window
            frames = self.frames[k]
            i = int(np.argmin(np.minimum(np.abs(frames - start), np.abs(frames - end))))
            return self.vectors[k][i]
        raise KeyError(f"no feature for trajectory {video_id}/{traj_id}")


def _padded_boxes(track: Track, start: int, end: int) -> np.ndarray:
    frames = np.arange(start, end + 1)
    return np.stack([np.interp(frames, track.frames, track.boxes[:, c]) for c in range(4)], axis=1)


def segment_clips(ann: DatasetAnnotation, features: FeatureIndex | Mapping[str, np.ndarray], cfg: PipelineConfig) -> list[Clip]:
    """Split a video into overlapping clips and cut each trajectory into clip tubelets.

    A trajectory joins a clip when it has boxes on at least
    ``membership_threshold`` of the clip's frames (within the video); missing
    frames are filled by linear interpolation and boundary repetition.
    """
    index = features if isinstance(features, FeatureIndex) else FeatureIndex(features)
    clips = []
    for k, (start, end) in enumerate(clip_windows(ann.frame_count, cfg.clip_length, cfg.clip_stride)):
        visible = min(end, ann.frame_count - 1) - start + 1
        tubelets = []
        for traj in ann.trajectories:
            inside = traj.track.restrict(start, end + 1)
            if inside is None or len(inside) < cfg.membership_threshold * visible:
                continue
            boxes = _padded_boxes(inside, start, end)
            appearance = index.appearance(ann.video_id, traj.traj_id, start, end)
            tubelets.append(
                Tubelet(
                    tubelet_id=f"{ann.video_id}/{traj.traj_id}/{k}",
                    category=traj.category,
                    clip_index=k,
                    track=Track(np.arange(start, end + 1), boxes),
                    appearance=appearance,
                    source_trajectory_id=traj.traj_id,
                )
            )
        clips.append(Clip(k, start, end, tuple(tubelets)))
    return clips


def derive_targets(clips: Sequence[Clip], ann: DatasetAnnotation, predicates: Sequence[str], cfg: PipelineConfig) -> np.ndarray:
    """0/1 matrix over (all ordered pairs of all clips) x predicates.

    A pair is positive for a predicate when a ground-truth relation joins the
    same trajectories and its span covers at least ``target_overlap`` of the clip.
    """
    pidx = {p: i for i, p in enumerate(predicates)}
    rows = []
    for clip in clips:
        need = cfg.target_overlap * clip.length
        active: dict[tuple[str, str], set[int]] = {}
        for r in ann.relations:
            if r.predicate not in pidx:
                continue
            overlap = min(r.end_fid, clip.end_frame + 1) - max(r.begin_fid, clip.start_frame)
            if overlap >= need:
                active.setdefault((r.subject, r.object), set()).add(pidx[r.predicate])
        for pair in clip.pairs():
            row = np.zeros(len(predicates))
            for p in active.get((pair.subject.source_trajectory_id, pair.object.source_trajectory_id), ()):
                row[p] = 1.0
            rows.append(row)
    if not rows:
        return np.zeros((0, len(predicates)))
    return np.stack(rows)
