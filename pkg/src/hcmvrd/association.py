"""Link per-clip relation triplets into video-level relations.

Three modes share one loop:

* ``greedy``  - a chain is extended only by a relation in the very next clip;
* ``relaxed`` - a chain that found no match in one clip may still be extended
  in the clip after it;
* ``vlink``   - like greedy, but continuity is decided by the source video
  trajectory ids instead of box overlap.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import ClipRelation, Track, Tubelet, VideoRelation
from .geometry import iou_arrays, shared_frames, volume_iou

MODES = ("greedy", "relaxed", "vlink")


@dataclass(frozen=True)
class AssocConfig:
    mode: str = "greedy"
    overlap_threshold: float = 0.5
    score_aggregation: str = "mean"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown association mode {self.mode!r}")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must lie in (0, 1]")
        if self.score_aggregation != "mean":
            raise ValueError("only mean score aggregation is supported")


def tubelet_overlap(prev: Tubelet, new: Tubelet) -> float:
    """Volume IoU on shared frames; boundary-box IoU when the tubelets do not overlap in time."""
    frames, _, _ = shared_frames(prev, new)
    if len(frames):
        return volume_iou(prev, new, overlap_only=True)
    return float(iou_arrays(prev.boxes[-1], new.boxes[0]))


def relation_key(r: ClipRelation) -> tuple:
    """Total order of the relations inside one clip: best score first."""
    return (-r.score, r.pair.subject.tubelet_id, r.pair.object.tubelet_id, r.predicate)


def can_extend(last: ClipRelation, gap: int, r: ClipRelation, cfg: AssocConfig) -> bool:
    s0, o0 = last.pair.subject, last.pair.object
    s1, o1 = r.pair.subject, r.pair.object
    if (s0.category, last.predicate, o0.category) != (s1.category, r.predicate, o1.category):
        return False
    if cfg.mode == "vlink":
        return gap == 1 and s0.source_trajectory_id == s1.source_trajectory_id and o0.source_trajectory_id == o1.source_trajectory_id
    if gap != 1 and not (cfg.mode == "relaxed" and gap == 2):
        return False
    return tubelet_overlap(s0, s1) >= cfg.overlap_threshold and tubelet_overlap(o0, o1) >= cfg.overlap_threshold


@dataclass
class _Chain:
    seq: int
    members: list[ClipRelation] = field(default_factory=list)

    @property
    def start_clip(self) -> int:
        return self.members[0].clip_index

    @property
    def last(self) -> ClipRelation:
        return self.members[-1]

    @property
    def score(self) -> float:
        return sum(m.score for m in self.members) / len(self.members)

    def priority(self) -> tuple:
        return (-self.score, self.start_clip, self.last.pair.subject.tubelet_id, self.last.pair.object.tubelet_id, self.seq)


def _group(clip_relations) -> list[tuple[int, list[ClipRelation]]]:
    items = list(clip_relations)
    if items and not isinstance(items[0], ClipRelation):
        groups = []
        for g in items:
            g = list(g)
            clips = {r.clip_index for r in g}
            if len(clips) > 1:
                raise ValueError("a clip group mixes clip indices")
            if g:
                groups.append((g[0].clip_index, g))
        idx = [c for c, _ in groups]
        if idx != sorted(idx) or len(set(idx)) != len(idx):
            raise ValueError("unordered clips")
        return groups
    by_clip: dict[int, list[ClipRelation]] = defaultdict(list)
    for r in items:
        by_clip[r.clip_index].append(r)
    return sorted(by_clip.items())


def _merge_track(tubelets: Sequence[Tubelet]) -> tuple[Track, tuple[int, ...]]:
    """Union of the member boxes, averaged where members overlap, linear across gaps."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for t in tubelets:
        for f, box in zip(t.frames.tolist(), t.boxes):
            if f in sums:
                sums[f] = sums[f] + box
                counts[f] += 1
            else:
                sums[f] = box.copy()
                counts[f] = 1
    known = sorted(sums)
    known_boxes = np.stack([sums[f] / counts[f] for f in known])
    frames = np.arange(known[0], known[-1] + 1)
    missing = tuple(int(f) for f in frames if f not in sums)
    if not missing:
        return Track(frames, known_boxes), ()
    boxes = np.stack([np.interp(frames, known, known_boxes[:, c]) for c in range(4)], axis=1)
    return Track(frames, boxes), missing


def chain_to_relation(members: Sequence[ClipRelation]) -> VideoRelation:
    sub_track, sub_gap = _merge_track([m.pair.subject for m in members])
    obj_track, obj_gap = _merge_track([m.pair.object for m in members])
    first = members[0]
    return VideoRelation(
        subject_category=first.pair.subject.category,
        predicate=first.predicate,
        object_category=first.pair.object.category,
        subject_track=sub_track,
        object_track=obj_track,
        begin_frame=sub_track.first_frame,
        end_frame=sub_track.last_frame,
        score=sum(m.score for m in members) / len(members),
        interpolated_frames=tuple(sorted(set(sub_gap) | set(obj_gap))),
        member_clips=tuple(m.clip_index for m in members),
    )


def associate_chains(clip_relations, cfg: AssocConfig) -> list[list[ClipRelation]]:
    groups = _group(clip_relations)
    if not groups:
        return []
    by_clip = dict(groups)
    chains: list[_Chain] = []
    open_chains: list[_Chain] = []
    for k in range(groups[0][0], groups[-1][0] + 1):
        extended: set[int] = set()
        for r in sorted(by_clip.get(k, ()), key=relation_key):
            options = [
                c for c in open_chains
                if c.seq not in extended and can_extend(c.last, k - c.last.clip_index, r, cfg)
            ]
            if options:
                best = min(options, key=_Chain.priority)
                best.members.append(r)
                extended.add(best.seq)
            else:
                c = _Chain(len(chains), [r])
                chains.append(c)
                open_chains.append(c)
                extended.add(c.seq)
        keep = []
        for c in open_chains:
            if c.seq in extended:
                keep.append(c)
            elif cfg.mode == "relaxed" and c.last.clip_index == k - 1:
                keep.append(c)  # first missed clip: allow one skip
        open_chains = keep
    return [c.members for c in chains]


def associate(clip_relations: Iterable[ClipRelation] | Iterable[Sequence[ClipRelation]], cfg: AssocConfig | None = None) -> list[VideoRelation]:
    """Video relations for one video, in chain creation order."""
    cfg = cfg or AssocConfig()
    return [chain_to_relation(m) for m in associate_chains(clip_relations, cfg)]


def brute_force_associate(clip_relations: Iterable[ClipRelation], cfg: AssocConfig | None = None) -> list[VideoRelation]:
    """Exhaustive reference for :func:`associate` on small instances (at most 6 clips, 4 pairs per clip)."""
    from .oracles import brute_force_associate as chains

    cfg = cfg or AssocConfig()
    rels = [r for g in _group(clip_relations) for r in g[1]]
    return [chain_to_relation(m) for m in chains(rels, cfg.mode, cfg.overlap_threshold)]
