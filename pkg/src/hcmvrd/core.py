"""Domain types and file IO for videos, tubelets, features, annotations and predictions."""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

FEATURE_MAGIC = b"VRFT"
FEATURE_VERSION_F32 = 1
FEATURE_VERSION_F64 = 2


class DatasetError(ValueError):
    """Malformed annotation document. The message carries video id and field path."""

    def __init__(self, video_id: str | None, field_path: str, reason: str):
        self.video_id = video_id
        self.field_path = field_path
        self.reason = reason
        super().__init__(f"video {video_id!r}, field {field_path}: {reason}")


class FeatureFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate box {vals}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def center(self) -> tuple[float, float]:
        return (self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.xmin, self.ymin, self.xmax, self.ymax], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "BoundingBox":
        return cls(*(float(v) for v in values))


def _validate_boxes(boxes: np.ndarray) -> None:
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValueError(f"boxes must have shape (T, 4), got {boxes.shape}")
    if not np.all(np.isfinite(boxes)):
        raise ValueError("non-finite box coordinates")
    if np.any(boxes[:, 2] <= boxes[:, 0]) or np.any(boxes[:, 3] <= boxes[:, 1]):
        raise ValueError("degenerate box (xmax <= xmin or ymax <= ymin)")


class Track:
    """Frame-indexed box sequence with strictly increasing frames.

    Boxes are kept as a read-only ``(T, 4)`` float64 array of corner coordinates.
    """

    __slots__ = ("frames", "boxes")

    def __init__(self, frames: Iterable[int], boxes: np.ndarray | Sequence[Sequence[float]]):
        f = np.asarray(list(frames) if not isinstance(frames, np.ndarray) else frames, dtype=np.int64)
        b = np.array(boxes, dtype=np.float64).reshape(-1, 4)
        if f.ndim != 1 or len(f) != len(b):
            raise ValueError("frames and boxes must have equal length")
        if len(f) == 0:
            raise ValueError("empty track")
        if np.any(np.diff(f) <= 0):
            raise ValueError("track frames must be strictly increasing")
        _validate_boxes(b)
        f.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "frames", f)
        object.__setattr__(self, "boxes", b)

    def __setattr__(self, name, value):
        raise AttributeError("Track is immutable")

    @classmethod
    def from_mapping(cls, boxes: Mapping[int, Sequence[float] | BoundingBox]) -> "Track":
        frames = sorted(boxes)
        rows = [boxes[f].as_array() if isinstance(boxes[f], BoundingBox) else boxes[f] for f in frames]
        return cls(frames, rows)

    def to_mapping(self) -> dict[int, list[float]]:
        return {int(f): [float(v) for v in row] for f, row in zip(self.frames, self.boxes)}

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    def box_at(self, frame: int) -> BoundingBox:
        idx = np.searchsorted(self.frames, frame)
        if idx >= len(self.frames) or self.frames[idx] != frame:
            raise KeyError(frame)
        return BoundingBox.from_array(self.boxes[idx])

    def restrict(self, begin: int, end: int) -> "Track | None":
        """Sub-track on frames in ``[begin, end)``; ``None`` when nothing remains."""
        mask = (self.frames >= begin) & (self.frames < end)
        if not mask.any():
            return None
        return Track(self.frames[mask], self.boxes[mask])

    def is_contiguous(self) -> bool:
        return bool(self.last_frame - self.first_frame + 1 == len(self.frames))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Track):
            return NotImplemented
        return np.array_equal(self.frames, other.frames) and np.array_equal(self.boxes, other.boxes)

    def __hash__(self):
        return hash((self.frames.tobytes(), self.boxes.tobytes()))

    def __repr__(self) -> str:
        return f"Track(frames={self.first_frame}..{self.last_frame}, n={len(self)})"


@dataclass(frozen=True, eq=False)
class Tubelet:
    tubelet_id: str
    category: str
    clip_index: int
    track: Track
    appearance: np.ndarray
    source_trajectory_id: str | None = None

    def __post_init__(self):
        if self.clip_index < 0:
            raise ValueError("clip_index must be >= 0")
        if not self.track.is_contiguous():
            raise ValueError(f"tubelet {self.tubelet_id}: frames must be contiguous")
        app = np.asarray(self.appearance, dtype=np.float64)
        if app.ndim != 1:
            raise ValueError("appearance must be a vector")
        app.flags.writeable = False
        object.__setattr__(self, "appearance", app)

    @property
    def frames(self) -> np.ndarray:
        return self.track.frames

    @property
    def boxes(self) -> np.ndarray:
        return self.track.boxes

    def __repr__(self) -> str:
        return f"Tubelet({self.tubelet_id!r}, {self.category!r}, clip={self.clip_index})"


@dataclass(frozen=True)
class Clip:
    clip_index: int
    start_frame: int
    end_frame: int  # inclusive
    tubelets: tuple[Tubelet, ...] = ()

    def __post_init__(self):
        for t in self.tubelets:
            if t.clip_index != self.clip_index:
                raise ValueError(f"tubelet {t.tubelet_id} belongs to clip {t.clip_index}, not {self.clip_index}")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1

    def pairs(self) -> list["ClipPair"]:
        """All ordered (subject, object) pairs, self-pairs excluded: M*(M-1) of them."""
        return [
            ClipPair(self.clip_index, s, o)
            for s in self.tubelets
            for o in self.tubelets
            if s is not o
        ]


@dataclass(frozen=True)
class ClipPair:
    clip_index: int
    subject: Tubelet
    object: Tubelet

    def __post_init__(self):
        if self.subject.tubelet_id == self.object.tubelet_id:
            raise ValueError("subject and object must differ")
        if self.subject.clip_index != self.clip_index or self.object.clip_index != self.clip_index:
            raise ValueError("pair members must lie in the pair's clip")

    @property
    def pair_id(self) -> tuple[str, str]:
        return self.subject.tubelet_id, self.object.tubelet_id


@dataclass(frozen=True)
class ClipRelation:
    pair: ClipPair
    predicate: str
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def clip_index(self) -> int:
        return self.pair.clip_index


@dataclass(frozen=True)
class VideoRelation:
    subject_category: str
    predicate: str
    object_category: str
    subject_track: Track
    object_track: Track
    begin_frame: int  # inclusive
    end_frame: int  # inclusive
    score: float
    interpolated_frames: tuple[int, ...] = ()
    member_clips: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.begin_frame > self.end_frame:
            raise ValueError("begin_frame > end_frame")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        span = self.end_frame - self.begin_frame + 1
        for name, tr in (("subject", self.subject_track), ("object", self.object_track)):
            if tr.first_frame != self.begin_frame or tr.last_frame != self.end_frame or len(tr) != span:
                raise ValueError(f"{name} track does not cover [{self.begin_frame}, {self.end_frame}]")

    @property
    def triplet(self) -> tuple[str, str, str]:
        return self.subject_category, self.predicate, self.object_category


@dataclass(frozen=True)
class Trajectory:
    traj_id: str
    category: str
    track: Track


@dataclass(frozen=True)
class GroundTruthRelation:
    subject: str
    object: str
    predicate: str
    begin_fid: int
    end_fid: int  # exclusive


@dataclass(frozen=True)
class DatasetAnnotation:
    video_id: str
    frame_count: int
    width: int
    height: int
    trajectories: tuple[Trajectory, ...]
    relations: tuple[GroundTruthRelation, ...]

    def trajectory(self, traj_id: str) -> Trajectory:
        for t in self.trajectories:
            if t.traj_id == traj_id:
                return t
        raise KeyError(traj_id)

    @property
    def categories(self) -> set[str]:
        return {t.category for t in self.trajectories}


# ---------------------------------------------------------------------------
# annotation JSON


def _require(doc: Mapping, key: str, kind, video_id, path: str):
    if not isinstance(doc, Mapping) or key not in doc:
        raise DatasetError(video_id, f"{path}.{key}" if path else key, "missing field")
    value = doc[key]
    if kind is int and isinstance(value, bool):
        raise DatasetError(video_id, f"{path}.{key}" if path else key, "expected int")
    if not isinstance(value, kind):
        raise DatasetError(video_id, f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def parse_annotation(doc: Mapping) -> DatasetAnnotation:
    """Build a validated :class:`DatasetAnnotation` from one parsed JSON object."""
    vid = doc.get("video_id") if isinstance(doc, Mapping) else None
    video_id = _require(doc, "video_id", str, vid, "")
    frame_count = _require(doc, "frame_count", int, video_id, "")
    width = _require(doc, "width", int, video_id, "")
    height = _require(doc, "height", int, video_id, "")
    if frame_count <= 0:
        raise DatasetError(video_id, "frame_count", "must be positive")

    trajectories = []
    seen = set()
    for i, tdoc in enumerate(_require(doc, "trajectories", list, video_id, "")):
        path = f"trajectories[{i}]"
        tid = _require(tdoc, "traj_id", str, video_id, path)
        if tid in seen:
            raise DatasetError(video_id, f"{path}.traj_id", f"duplicate trajectory id {tid!r}")
        seen.add(tid)
        category = _require(tdoc, "category", str, video_id, path)
        boxes = _require(tdoc, "boxes", dict, video_id, path)
        if not boxes:
            raise DatasetError(video_id, f"{path}.boxes", "empty trajectory")
        rows = {}
        for key, box in boxes.items():
            try:
                frame = int(key)
            except ValueError:
                raise DatasetError(video_id, f"{path}.boxes[{key!r}]", "frame key is not an integer") from None
            if not 0 <= frame < frame_count:
                raise DatasetError(video_id, f"{path}.boxes[{key!r}]", "frame outside [0, frame_count)")
            if not (isinstance(box, list) and len(box) == 4 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in box)):
                raise DatasetError(video_id, f"{path}.boxes[{key!r}]", "expected [xmin, ymin, xmax, ymax]")
            rows[frame] = [float(v) for v in box]
        try:
            track = Track.from_mapping(rows)
        except ValueError as exc:
            raise DatasetError(video_id, f"{path}.boxes", str(exc)) from None
        trajectories.append(Trajectory(tid, category, track))

    relations = []
    for i, rdoc in enumerate(_require(doc, "relations", list, video_id, "")):
        path = f"relations[{i}]"
        subject = _require(rdoc, "subject", str, video_id, path)
        obj = _require(rdoc, "object", str, video_id, path)
        predicate = _require(rdoc, "predicate", str, video_id, path)
        begin = _require(rdoc, "begin_fid", int, video_id, path)
        end = _require(rdoc, "end_fid", int, video_id, path)
        for role, tid in (("subject", subject), ("object", obj)):
            if tid not in seen:
                raise DatasetError(video_id, f"{path}.{role}", f"unknown trajectory {tid!r}")
        if not 0 <= begin < end <= frame_count:
            raise DatasetError(video_id, f"{path}.begin_fid", f"span [{begin}, {end}) outside [0, {frame_count})")
        relations.append(GroundTruthRelation(subject, obj, predicate, begin, end))

    return DatasetAnnotation(video_id, frame_count, width, height, tuple(trajectories), tuple(relations))


def annotation_to_dict(ann: DatasetAnnotation) -> dict:
    return {
        "video_id": ann.video_id,
        "frame_count": ann.frame_count,
        "width": ann.width,
        "height": ann.height,
        "trajectories": [
            {
                "traj_id": t.traj_id,
                "category": t.category,
                "boxes": {str(f): box for f, box in t.track.to_mapping().items()},
            }
            for t in ann.trajectories
        ],
        "relations": [
            {
                "subject": r.subject,
                "object": r.object,
                "predicate": r.predicate,
                "begin_fid": r.begin_fid,
                "end_fid": r.end_fid,
            }
            for r in ann.relations
        ],
    }


def _read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetError(path.stem, "<document>", f"malformed JSON: {exc}") from None


def load_dataset(path: str | os.PathLike) -> list[DatasetAnnotation]:
    """Load every ``*.json`` annotation under ``path`` (a directory or a single file).

    Results are sorted by file name so the order never depends on the filesystem.
    """
    path = Path(path)
    files = sorted(p for p in path.glob("*.json") if p.name != "manifest.json") if path.is_dir() else [path]
    out = []
    for f in files:
        doc = _read_json(f)
        docs = doc if isinstance(doc, list) else [doc]
        out.extend(parse_annotation(d) for d in docs)
    return out


def save_dataset(annotations: Iterable[DatasetAnnotation], path: str | os.PathLike) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for ann in annotations:
        with open(path / f"{ann.video_id}.json", "w", encoding="utf-8") as fh:
            json.dump(annotation_to_dict(ann), fh, separators=(",", ":"))


# ---------------------------------------------------------------------------
# binary feature file


def write_features(features: Mapping[str, np.ndarray], path: str | os.PathLike, *, double: bool = False) -> None:
    """Write ``id -> vector`` records in the VRFT container.

    ``double=False`` writes version 1 (32-bit floats); ``double=True`` writes
    version 2 (64-bit floats), used for bit-exact parameter checkpoints.
    """
    items = list(features.items())
    dims = {np.asarray(v).size for _, v in items}
    if len(dims) > 1:
        raise FeatureFormatError(f"mixed feature dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    version = FEATURE_VERSION_F64 if double else FEATURE_VERSION_F32
    dtype = "<f8" if double else "<f4"
    chunks = [FEATURE_MAGIC, struct.pack("<III", version, dim, len(items))]
    for key, vec in items:
        raw = key.encode("utf-8")
        arr = np.asarray(vec, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise FeatureFormatError(f"non-finite feature for {key!r}")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(arr.astype(dtype).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_features(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != FEATURE_MAGIC:
        raise FeatureFormatError("bad magic or truncated header")
    version, dim, count = struct.unpack_from("<III", blob, 4)
    if version == FEATURE_VERSION_F32:
        dtype, width = "<f4", 4
    elif version == FEATURE_VERSION_F64:
        dtype, width = "<f8", 8
    else:
        raise FeatureFormatError(f"unsupported version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 16
    for _ in range(count):
        if pos + 4 > len(blob):
            raise FeatureFormatError("payload size mismatch")
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + n + dim * width > len(blob):
            raise FeatureFormatError("payload size mismatch")
        key = blob[pos : pos + n].decode("utf-8")
        pos += n
        vec = np.frombuffer(blob, dtype=dtype, count=dim, offset=pos).astype(np.float64)
        pos += dim * width
        if not np.all(np.isfinite(vec)):
            raise FeatureFormatError(f"non-finite feature for {key!r}")
        out[key] = vec
    if pos != len(blob):
        raise FeatureFormatError("payload size mismatch")
    return out


# ---------------------------------------------------------------------------
# prediction JSON
#
# "duration" is half-open [begin, end) like the annotation spans; the in-memory
# VideoRelation keeps an inclusive end frame.


def video_relation_to_dict(rel: VideoRelation) -> dict:
    doc = {
        "triplet": [rel.subject_category, rel.predicate, rel.object_category],
        "score": float(rel.score),
        "duration": [rel.begin_frame, rel.end_frame + 1],
        "sub_traj": {str(f): b for f, b in rel.subject_track.to_mapping().items()},
        "obj_traj": {str(f): b for f, b in rel.object_track.to_mapping().items()},
    }
    if rel.interpolated_frames:
        doc["interpolated"] = list(rel.interpolated_frames)
    return doc


def video_relation_from_dict(doc: Mapping) -> VideoRelation:
    subj, pred, obj = doc["triplet"]
    begin, end = doc["duration"]
    return VideoRelation(
        subject_category=subj,
        predicate=pred,
        object_category=obj,
        subject_track=Track.from_mapping({int(k): v for k, v in doc["sub_traj"].items()}),
        object_track=Track.from_mapping({int(k): v for k, v in doc["obj_traj"].items()}),
        begin_frame=int(begin),
        end_frame=int(end) - 1,
        score=float(doc["score"]),
        interpolated_frames=tuple(int(f) for f in doc.get("interpolated", ())),
    )


def write_predictions(video_id: str, relations: Sequence[VideoRelation], path: str | os.PathLike) -> None:
    doc = {"video_id": video_id, "relations": [video_relation_to_dict(r) for r in relations]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_predictions(path: str | os.PathLike) -> tuple[str, list[VideoRelation]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return doc["video_id"], [video_relation_from_dict(r) for r in doc["relations"]]


def save_prediction_dir(predictions: Mapping[str, Sequence[VideoRelation]], path: str | os.PathLike) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for video_id in sorted(predictions):
        write_predictions(video_id, predictions[video_id], path / f"{video_id}.json")


def load_prediction_dir(path: str | os.PathLike) -> dict[str, list[VideoRelation]]:
    out = {}
    for f in sorted(Path(path).glob("*.json")):
        if f.name == "manifest.json":
            continue
        vid, rels = load_predictions(f)
        out[vid] = rels
    return out
