"""Seeded synthetic videos with scripted relations, for desk-scale experiments.

Each video is laid out on a grid of slots. A scripted relation occupies one
slot: an object drifts slowly and the subject follows a fixed offset pattern
relative to it. Remaining objects are distractors in slots of their own.

Patterns are chosen so that different parts of the model are needed:

``next_to``, ``above``, ``chase`` and ``ring*``
    the relative geometry of the pair alone decides the predicate;
``ctx_a`` / ``ctx_b``
    same pair geometry, the predicate depends on the category of a third
    object overlapping the subject (only visible through spatial context);
``onset_a`` / ``onset_b``
    same geometry for the whole labelled span; the predicate depends on which
    side the subject arrived from before the span starts (only visible through
    temporal context from the previous clip).

Appearance features are a unit category embedding plus a per-trajectory
offset plus per-keyframe noise.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from types import SimpleNamespace
from typing import Mapping, Sequence

import numpy as np

from .core import (
    ClipPair,
    ClipRelation,
    DatasetAnnotation,
    GroundTruthRelation,
    Track,
    Trajectory,
    Tubelet,
    VideoRelation,
    save_dataset,
    write_features,
)

PATTERNS = ("next_to", "above", "chase", "ctx_a", "ctx_b", "onset_a", "onset_b", "ring")
SPANS = ("long", "short")

# subject centre offset from the object centre, in units of the object size
_OFFSETS = {
    "next_to": (-1.3, 0.0),
    "above": (0.0, -1.3),
    "chase": (-1.6, 1.1),
    "ctx_a": (1.3, 0.0),
    "ctx_b": (1.3, 0.0),
    "onset_a": (0.0, 1.3),
    "onset_b": (0.0, 1.3),
}
ONSET_FRAMES = 15  # arrival motion lasts frames [0, ONSET_FRAMES)
ONSET_SPAN_BEGIN = 16
ONSET_START_DX = 3.0


@dataclass(frozen=True)
class RelationScript:
    predicate: str
    pattern: str
    span: str = "long"
    weight: float = 1.0
    ring_index: int = 0
    ring_size: int = 1

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.span not in SPANS:
            raise ValueError(f"unknown span kind {self.span!r}")
        if self.weight <= 0:
            raise ValueError("script weight must be positive")

    @property
    def needs_context(self) -> bool:
        return self.pattern in ("ctx_a", "ctx_b")


def default_scripts() -> tuple[RelationScript, ...]:
    return (
        RelationScript("next_to", "next_to"),
        RelationScript("above", "above"),
        RelationScript("chase", "chase"),
        RelationScript("ctx_a", "ctx_a", weight=1.5),
        RelationScript("ctx_b", "ctx_b", weight=1.5),
        RelationScript("onset_a", "onset_a", weight=1.5),
        RelationScript("onset_b", "onset_b", weight=1.5),
    )


def ring_scripts(n: int, span: str = "long") -> tuple[RelationScript, ...]:
    """``n`` purely geometric predicates at evenly spaced directions around the object."""
    return tuple(RelationScript(f"ring{k:02d}", "ring", span, ring_index=k, ring_size=n) for k in range(n))


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    train_videos: int = 200
    test_videos: int = 50
    frame_count: int = 75
    objects: tuple[int, int] = (3, 4)
    num_categories: int = 12
    scripts: tuple[RelationScript, ...] = field(default_factory=default_scripts)
    relations_per_video: int = 1
    noise: float = 0.05
    feature_dim: int = 256
    feature_stride: int = 5
    offset_scale: float = 0.8
    jitter: float = 0.1
    width: int = 640
    height: int = 480
    clip_length: int = 30
    clip_stride: int = 15
    dropout_clips: tuple[int, ...] = ()

    def __post_init__(self):
        if self.train_videos < 0 or self.test_videos < 0 or self.train_videos + self.test_videos == 0:
            raise ValueError("video counts must be non-negative and not both zero")
        if self.frame_count <= 0 or self.feature_dim <= 0 or self.feature_stride <= 0:
            raise ValueError("frame_count, feature_dim and feature_stride must be positive")
        lo, hi = self.objects
        if not 1 <= lo <= hi:
            raise ValueError("object count range must satisfy 1 <= min <= max")
        if self.num_categories < 4:
            raise ValueError("need at least 4 categories")
        if self.noise < 0 or self.offset_scale < 0 or self.jitter < 0:
            raise ValueError("noise, offset_scale and jitter must be >= 0")
        if not self.scripts or self.relations_per_video < 0:
            raise ValueError("need at least one script and relations_per_video >= 0")
        need = self.relations_per_video * (3 if any(s.needs_context for s in self.scripts) else 2)
        if need > lo:
            raise ValueError(f"infeasible scenario: {self.relations_per_video} relations need up to {need} objects, minimum is {lo}")
        groups = self.relations_per_video + max(0, hi - 2 * self.relations_per_video)
        if groups > len(_slot_centres(self)):
            raise ValueError("infeasible scenario: more object groups than layout slots")

    @property
    def predicates(self) -> tuple[str, ...]:
        return tuple(sorted({s.predicate for s in self.scripts}))

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(f"c{i:02d}" for i in range(self.num_categories))

    def category_groups(self) -> dict[str, tuple[str, ...]]:
        cats = self.categories
        half, three_q = len(cats) // 2, (3 * len(cats)) // 4
        return {"agent": cats[:half], "ctx_a": cats[half:three_q], "ctx_b": cats[three_q:]}

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["objects"] = list(self.objects)
        doc["dropout_clips"] = list(self.dropout_clips)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown scenario fields {sorted(unknown)}")
        kw = dict(doc)
        if "objects" in kw:
            kw["objects"] = tuple(kw["objects"])
        if "dropout_clips" in kw:
            kw["dropout_clips"] = tuple(kw["dropout_clips"])
        if "scripts" in kw:
            kw["scripts"] = tuple(RelationScript(**s) for s in kw["scripts"])
        return cls(**kw)


def _slot_centres(conf: ScenarioConfig) -> list[tuple[float, float]]:
    cols, rows = 3, 2
    return [((c + 0.5) * conf.width / cols, (r + 0.5) * conf.height / rows) for r in range(rows) for c in range(cols)]


# ---------------------------------------------------------------------------
# scenario presets


def default_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    return replace(ScenarioConfig(seed=seed), **overrides)


def association_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    """Long relations over 7 clips; the test input loses the subject in clips 2 and 5.

    Dropped clips must be at least two apart: clips overlap by half, so two
    dropouts one clip apart also empty the clip between them.
    """
    base = ScenarioConfig(
        seed=seed,
        train_videos=60,
        test_videos=20,
        frame_count=120,
        objects=(2, 3),
        scripts=(RelationScript("next_to", "next_to"), RelationScript("above", "above")),
        dropout_clips=(2, 5),
    )
    return replace(base, **overrides)


def imbalance_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    """Many geometric predicates, few positives per pair."""
    base = ScenarioConfig(
        seed=seed,
        train_videos=120,
        test_videos=40,
        frame_count=60,
        objects=(5, 5),
        scripts=ring_scripts(16),
        relations_per_video=2,
        jitter=0.05,
    )
    return replace(base, **overrides)


PRESETS = {"default": default_scenario, "association": association_scenario, "imbalance": imbalance_scenario}


# ---------------------------------------------------------------------------
# generation


@dataclass
class Scenario:
    conf: ScenarioConfig
    train: list[DatasetAnnotation]
    test: list[DatasetAnnotation]
    test_input: list[DatasetAnnotation]
    features: dict[str, np.ndarray]

    def positive_rate(self, cfg=None) -> float:
        """Fraction of positive (pair, predicate) target entries over the training clips."""
        from .pipeline.clips import FeatureIndex, derive_targets, segment_clips
        from .pipeline.config import PipelineConfig

        cfg = cfg or PipelineConfig(clip_length=self.conf.clip_length, clip_stride=self.conf.clip_stride)
        index = FeatureIndex(self.features)
        pos = total = 0
        for ann in self.train:
            t = derive_targets(segment_clips(ann, index, cfg), ann, self.conf.predicates, cfg)
            pos += int(t.sum())
            total += t.size
        return pos / total if total else 0.0


class _Builder:
    """Accumulates trajectories and keyframe features for one video."""

    def __init__(self, conf: ScenarioConfig, video_id: str, rng: np.random.Generator, embeddings: np.ndarray):
        self.conf, self.video_id, self.rng, self.emb = conf, video_id, rng, embeddings
        self.frames = np.arange(conf.frame_count)
        self.trajectories: list[Trajectory] = []
        self.features: dict[str, np.ndarray] = {}

    def add(self, category: str, centres: np.ndarray, size: tuple[float, float]) -> str:
        tid = str(len(self.trajectories))
        w, h = size
        boxes = np.column_stack([centres[:, 0] - w / 2, centres[:, 1] - h / 2, centres[:, 0] + w / 2, centres[:, 1] + h / 2])
        self.trajectories.append(Trajectory(tid, category, Track(self.frames, np.round(boxes, 2))))
        conf, rng = self.conf, self.rng
        base = self.emb[int(category[1:])]
        offset = rng.standard_normal(conf.feature_dim)
        offset *= conf.offset_scale / np.linalg.norm(offset)
        for f in range(0, conf.frame_count, conf.feature_stride):
            noise = rng.standard_normal(conf.feature_dim) * (conf.noise / np.sqrt(conf.feature_dim))
            self.features[f"{self.video_id}/{tid}/{f}"] = base + offset + noise
        return tid

    def size(self) -> tuple[float, float]:
        return float(self.rng.uniform(40, 60)), float(self.rng.uniform(40, 60))

    def drift(self, centre: tuple[float, float], speed: float) -> np.ndarray:
        angle = self.rng.uniform(0, 2 * np.pi)
        v = speed * np.array([np.cos(angle), np.sin(angle)])
        return np.asarray(centre) + self.frames[:, None] * v


def _span(script: RelationScript, conf: ScenarioConfig, rng: np.random.Generator) -> tuple[int, int]:
    if script.pattern in ("onset_a", "onset_b"):
        return ONSET_SPAN_BEGIN, conf.frame_count
    if script.span == "long":
        return 0, conf.frame_count
    length = int(rng.integers(conf.clip_length, max(conf.clip_length + 1, conf.frame_count // 2 + 1)))
    length = min(length, conf.frame_count)
    begin = int(rng.integers(0, conf.frame_count - length + 1))
    return begin, begin + length


def _subject_offsets(script: RelationScript, conf: ScenarioConfig, span: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Per-frame subject offset (in object-size units) relative to the object."""
    if script.pattern == "ring":
        angle = 2 * np.pi * script.ring_index / script.ring_size
        base = 1.3 * np.array([np.cos(angle), np.sin(angle)])
    else:
        base = np.array(_OFFSETS[script.pattern])
    base = base + rng.uniform(-conf.jitter, conf.jitter, size=2)
    n = conf.frame_count
    off = np.tile(base, (n, 1))
    if script.pattern in ("onset_a", "onset_b"):
        side = -1.0 if script.pattern == "onset_a" else 1.0
        start = base + np.array([side * ONSET_START_DX, 0.0])
        t = np.clip(np.arange(n) / ONSET_FRAMES, 0.0, 1.0)[:, None]
        off = start + t * (base - start)
    elif script.span == "short":
        # apart outside the span, ramping in and out over 5 frames
        apart = base * 4.0
        begin, end = span
        f = np.arange(n)
        w = np.clip(np.minimum(f - begin + 5, end + 4 - f) / 5.0, 0.0, 1.0)[:, None]
        off = apart + w * (base - apart)
    return off


def _dropout(ann: DatasetAnnotation, subjects: Sequence[str], conf: ScenarioConfig) -> DatasetAnnotation:
    """Remove the interior frames of each listed clip from the scripted subjects."""
    drop = set()
    for k in conf.dropout_clips:
        start = k * conf.clip_stride
        drop.update(range(start + 1, start + conf.clip_length - 1))
    trajs = []
    for t in ann.trajectories:
        if t.traj_id in subjects and drop:
            keep = np.array([f not in drop for f in t.track.frames.tolist()])
            t = Trajectory(t.traj_id, t.category, Track(t.track.frames[keep], t.track.boxes[keep]))
        trajs.append(t)
    return replace(ann, trajectories=tuple(trajs))


def _category_embeddings(conf: ScenarioConfig) -> np.ndarray:
    rng = np.random.default_rng([conf.seed, 7919])
    emb = rng.standard_normal((conf.num_categories, conf.feature_dim))
    return emb / np.linalg.norm(emb, axis=1, keepdims=True)


def generate_video(conf: ScenarioConfig, index: int, embeddings: np.ndarray | None = None) -> tuple[DatasetAnnotation, DatasetAnnotation, dict[str, np.ndarray]]:
    """One video: (clean annotation, tracker-style input annotation, keyframe features)."""
    emb = _category_embeddings(conf) if embeddings is None else embeddings
    rng = np.random.default_rng([conf.seed, index])
    vid = f"v{index:04d}"
    b = _Builder(conf, vid, rng, emb)
    groups = conf.category_groups()
    slots = _slot_centres(conf)
    order = rng.permutation(len(slots))
    weights = np.array([s.weight for s in conf.scripts])
    n_objects = int(rng.integers(conf.objects[0], conf.objects[1] + 1))

    relations, subjects = [], []
    slot = 0
    for _ in range(conf.relations_per_video):
        script = conf.scripts[int(rng.choice(len(conf.scripts), p=weights / weights.sum()))]
        span = _span(script, conf, rng)
        centre = slots[order[slot]]
        slot += 1
        speed = 1.2 if script.pattern == "chase" else rng.uniform(0.0, 0.3)
        o_size = b.size()
        o_centres = b.drift(centre, speed)
        offsets = _subject_offsets(script, conf, span, rng)
        s_centres = o_centres + offsets * np.array(o_size)
        s_size = b.size()
        s_cat, o_cat = rng.choice(groups["agent"], size=2)
        sid = b.add(str(s_cat), s_centres, s_size)
        oid = b.add(str(o_cat), o_centres, o_size)
        if script.needs_context:
            c_cat = rng.choice(groups[script.pattern])
            shift = 0.35 * np.array(s_size) * rng.choice([-1.0, 1.0], size=2)
            b.add(str(c_cat), s_centres + shift, s_size)
        relations.append(GroundTruthRelation(sid, oid, script.predicate, *span))
        subjects.append(sid)

    while len(b.trajectories) < n_objects:
        if slot >= len(slots):
            raise ValueError("infeasible scenario: more object groups than layout slots")
        centre = slots[order[slot]]
        slot += 1
        b.add(str(rng.choice(conf.categories)), b.drift(centre, rng.uniform(0.0, 0.3)), b.size())

    ann = DatasetAnnotation(vid, conf.frame_count, conf.width, conf.height, tuple(b.trajectories), tuple(relations))
    degraded = _dropout(ann, subjects, conf) if conf.dropout_clips else ann
    return ann, degraded, b.features


def generate(conf: ScenarioConfig) -> Scenario:
    """Deterministic in ``conf``: equal configs give bit-identical scenarios."""
    emb = _category_embeddings(conf)
    clean, degraded, features = [], [], {}
    for i in range(conf.train_videos + conf.test_videos):
        ann, inp, feats = generate_video(conf, i, emb)
        clean.append(ann)
        degraded.append(inp)
        features.update(feats)
    n = conf.train_videos
    return Scenario(conf, clean[:n], clean[n:], degraded[n:], features)


def save_scenario(scn: Scenario, out: str | os.PathLike) -> dict[str, Path]:
    """Write ``train/``, ``test/``, ``test_input/``, ``features.bin`` and ``scenario.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("train", "test", "test_input")}
    save_dataset(scn.train, paths["train"])
    save_dataset(scn.test, paths["test"])
    save_dataset(scn.test_input, paths["test_input"])
    paths["features"] = out / "features.bin"
    write_features(scn.features, paths["features"])
    paths["scenario"] = out / "scenario.json"
    with open(paths["scenario"], "w", encoding="utf-8") as fh:
        json.dump(scn.conf.to_dict(), fh, indent=2, sort_keys=True)
    return paths


def load_scenario_config(path: str | os.PathLike | None) -> ScenarioConfig:
    """A scenario file is either full ``ScenarioConfig`` fields or ``{"preset": name, ...overrides}``."""
    if path is None:
        return default_scenario()
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    preset = doc.pop("preset", None)
    if preset is None:
        return ScenarioConfig.from_dict(doc)
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    base = PRESETS[preset]()
    return ScenarioConfig.from_dict({**base.to_dict(), **doc})


def oracle_pack() -> SimpleNamespace:
    """Independent reference implementations used by the test-suite."""
    from . import oracles

    return SimpleNamespace(
        pixel_iou=oracles.pixel_iou,
        volume_iou=oracles.volume_iou_frames,
        associate=oracles.brute_force_associate,
        reldet=oracles.exhaustive_reldet,
    )


# ---------------------------------------------------------------------------
# small random instances for cross-checking against the exhaustive oracles


def random_clip_relations(seed: int, max_clips: int = 6, max_pairs: int = 4) -> list[ClipRelation]:
    """Clip relations of one made-up video, small enough for the brute-force associator.

    Three drifting objects and up to ``max_pairs`` labelled ordered pairs; each
    clip drops some of them and sometimes adds the other predicate. Scores are
    coarse so ties happen, and some tubelets get a fresh source id to exercise
    id-based linking.
    """
    rng = np.random.default_rng([seed, 91])
    n_clips = int(rng.integers(1, max_clips + 1))
    length = 10
    stride = int(rng.choice([5, 10]))
    cats = rng.choice(["a", "b"], size=3)
    base = rng.uniform(0, 30, size=(3, 2))
    size = rng.uniform(6, 12, size=(3, 2))
    pos = base.copy()
    pairs = [(s, o) for s in range(3) for o in range(3) if s != o]
    chosen = [(*pairs[j], str(rng.choice(["p", "q"]))) for j in sorted(rng.permutation(6)[: int(rng.integers(1, max_pairs + 1))])]
    alt = {"p": "q", "q": "p"}
    out = []
    for k in range(n_clips):
        pos = pos + rng.normal(scale=1.0, size=pos.shape)
        if rng.random() < 0.25:
            continue
        start = k * stride
        frames = np.arange(start, start + length)
        tubes = []
        for i in range(3):
            drift = np.outer(np.arange(length), rng.normal(scale=0.2, size=2))
            lo = pos[i] + drift
            boxes = np.hstack([lo, lo + size[i]])
            source = f"o{i}" if rng.random() < 0.85 else f"o{i}x{k}"
            tubes.append(Tubelet(f"{k}/{i}", str(cats[i]), k, Track(frames, boxes), np.zeros(1), source))
        for s, o, pred in chosen:
            if rng.random() < 0.2:
                continue
            preds = [pred] + ([alt[pred]] if rng.random() < 0.3 else [])
            for p in preds:
                score = float(rng.integers(1, 11)) / 10.0
                out.append(ClipRelation(ClipPair(k, tubes[s], tubes[o]), p, score))
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def random_detection_instance(seed: int, max_preds: int = 5, max_gt: int = 3) -> tuple[DatasetAnnotation, list[VideoRelation]]:
    """One annotated video and a handful of scored predictions near its relations."""
    rng = np.random.default_rng([seed, 92])
    frame_count = 20
    n_traj = 3
    trajectories = []
    for i in range(n_traj):
        first = int(rng.integers(0, 5))
        last = int(rng.integers(15, frame_count))
        frames = np.arange(first, last + 1)
        lo = rng.uniform(0, 40, size=2) + np.outer(frames - first, rng.normal(scale=0.5, size=2))
        boxes = np.hstack([lo, lo + rng.uniform(5, 15, size=2)])
        trajectories.append(Trajectory(f"t{i}", str(rng.choice(["a", "b"])), Track(frames, boxes)))
    relations = []
    for _ in range(int(rng.integers(1, max_gt + 1))):
        s, o = rng.choice(n_traj, size=2, replace=False)
        lo = max(trajectories[s].track.first_frame, trajectories[o].track.first_frame)
        hi = min(trajectories[s].track.last_frame, trajectories[o].track.last_frame)
        b = int(rng.integers(lo, hi))
        e = int(rng.integers(b + 1, hi + 2))
        relations.append(GroundTruthRelation(f"t{s}", f"t{o}", str(rng.choice(["p", "q"])), b, e))
    ann = DatasetAnnotation("r", frame_count, 100, 100, tuple(trajectories), tuple(relations))

    preds = []
    for _ in range(int(rng.integers(0, max_preds + 1))):
        if relations and rng.random() < 0.7:
            # near a ground-truth relation, sometimes with a shortened span
            g = relations[int(rng.integers(len(relations)))]
            s, o = int(g.subject[1:]), int(g.object[1:])
            b, e = g.begin_fid, g.end_fid - 1
            if rng.random() < 0.3:
                b = int(rng.integers(b, e + 1))
            predicate = g.predicate if rng.random() < 0.8 else str(rng.choice(["p", "q"]))
        else:
            s, o = (int(v) for v in rng.choice(n_traj, size=2, replace=False))
            lo = max(trajectories[s].track.first_frame, trajectories[o].track.first_frame)
            hi = min(trajectories[s].track.last_frame, trajectories[o].track.last_frame)
            b = int(rng.integers(lo, hi + 1))
            e = int(rng.integers(b, hi + 1))
            predicate = str(rng.choice(["p", "q"]))
        jitter = float(rng.choice([0.0, 1.0, 4.0]))

        def cut(track):
            sub = track.restrict(b, e + 1)
            return Track(sub.frames, sub.boxes + np.tile(rng.normal(scale=jitter, size=2), 2))

        triplet = (trajectories[s].category, predicate, trajectories[o].category)
        score = float(rng.integers(1, 6)) / 5.0
        preds.append(VideoRelation(*triplet, cut(trajectories[s].track), cut(trajectories[o].track), b, e, score))
    return ann, preds
