"""Box and tubelet geometry: IoU, mean IoU, volume IoU and relative spatial features."""

from __future__ import annotations

import numpy as np

from .core import BoundingBox, Track, Tubelet

TrackLike = Track | Tubelet


def _as_track(t: TrackLike) -> Track:
    return t.track if isinstance(t, Tubelet) else t


def box_areas(boxes: np.ndarray) -> np.ndarray:
    return (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])


def intersection_areas(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise intersection areas of two ``(T, 4)`` box arrays."""
    w = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    h = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    return np.clip(w, 0.0, None) * np.clip(h, 0.0, None)


def iou_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    inter = intersection_areas(a, b)
    return inter / (box_areas(a) + box_areas(b) - inter)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    return float(iou_arrays(a.as_array(), b.as_array()))


def shared_frames(a: TrackLike, b: TrackLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frames covered by both tracks and their row indices into each."""
    ta, tb = _as_track(a), _as_track(b)
    return np.intersect1d(ta.frames, tb.frames, assume_unique=True, return_indices=True)


def mean_iou(a: TrackLike, b: TrackLike) -> float:
    """Average per-frame IoU over the overlapped duration; 0 if the tracks never overlap in time."""
    ta, tb = _as_track(a), _as_track(b)
    frames, ia, ib = shared_frames(ta, tb)
    if len(frames) == 0:
        return 0.0
    return float(np.mean(iou_arrays(ta.boxes[ia], tb.boxes[ib])))


def volume_iou(a: TrackLike, b: TrackLike, overlap_only: bool = False) -> float:
    """Spatio-temporal volume IoU.

    With ``overlap_only`` both tracks are first restricted to the frames they
    share, which is the form used to compare continuations across adjacent
    overlapping clips.
    """
    ta, tb = _as_track(a), _as_track(b)
    frames, ia, ib = shared_frames(ta, tb)
    if len(frames) == 0:
        return 0.0
    inter = float(np.sum(intersection_areas(ta.boxes[ia], tb.boxes[ib])))
    if overlap_only:
        vol_a = float(np.sum(box_areas(ta.boxes[ia])))
        vol_b = float(np.sum(box_areas(tb.boxes[ib])))
    else:
        vol_a = float(np.sum(box_areas(ta.boxes)))
        vol_b = float(np.sum(box_areas(tb.boxes)))
    return inter / (vol_a + vol_b - inter)


def rel_spatial_arrays(bi: np.ndarray, bj: np.ndarray) -> np.ndarray:
    """Relative positional feature of box ``bi`` w.r.t. ``bj``; works row-wise on ``(..., 4)``."""
    wi, hi = bi[..., 2] - bi[..., 0], bi[..., 3] - bi[..., 1]
    wj, hj = bj[..., 2] - bj[..., 0], bj[..., 3] - bj[..., 1]
    xi, yi = (bi[..., 0] + bi[..., 2]) / 2.0, (bi[..., 1] + bi[..., 3]) / 2.0
    xj, yj = (bj[..., 0] + bj[..., 2]) / 2.0, (bj[..., 1] + bj[..., 3]) / 2.0
    # differences of logs keep the swap antisymmetry exact
    lw = np.log(wi) - np.log(wj)
    lh = np.log(hi) - np.log(hj)
    return np.stack([(xi - xj) / wj, (yi - yj) / hj, lw, lh, lw + lh], axis=-1)


def rel_spatial(i: BoundingBox, j: BoundingBox) -> np.ndarray:
    return rel_spatial_arrays(i.as_array(), j.as_array())


def pair_spatial(subject: TrackLike, obj: TrackLike) -> np.ndarray:
    """10-dim pair feature: relative position at the first and at the last shared frame."""
    ts, to = _as_track(subject), _as_track(obj)
    frames, i_s, i_o = shared_frames(ts, to)
    if len(frames) == 0:
        raise ValueError("no temporal overlap")
    start = rel_spatial_arrays(ts.boxes[i_s[0]], to.boxes[i_o[0]])
    end = rel_spatial_arrays(ts.boxes[i_s[-1]], to.boxes[i_o[-1]])
    return np.concatenate([start, end])
