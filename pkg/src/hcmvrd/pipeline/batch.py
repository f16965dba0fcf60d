"""Assemble consecutive clips of one video into a graph batch."""

from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np

from ..core import Clip, ClipPair
from ..geometry import pair_spatial
from ..graphs import (
    CooccurrenceTable,
    EdgeList,
    SpatialGraph,
    build_object_temporal_graph,
    build_spatial_graph,
    build_temporal_graph,
    pair_spatial_edges,
)
from ..neural.layers import MeanAggregator
from .config import PipelineConfig


class ClipBatch:
    """Node features, index maps and graphs for a run of consecutive clips.

    Object nodes are the clips' tubelets in clip order; relation nodes are the
    ordered pairs of each clip in :meth:`Clip.pairs` order. Graph variants not
    used by the configured architecture are built lazily on first access.
    """

    def __init__(self, video_id: str, clips: Sequence[Clip], cooc: CooccurrenceTable, cfg: PipelineConfig, targets: np.ndarray | None = None):
        for a, b in zip(clips, clips[1:]):
            if b.clip_index != a.clip_index + 1:
                raise ValueError("batch clips must be consecutive")
        self.video_id = video_id
        self.clips = tuple(clips)
        self.cfg = cfg
        self.cooc = cooc
        tubelets = [t for c in clips for t in c.tubelets]
        self.object_index = {t.tubelet_id: i for i, t in enumerate(tubelets)}
        self.tubelets = tuple(tubelets)
        dims = {t.appearance.size for t in tubelets}
        if len(dims) > 1:
            raise ValueError("mixed appearance dimensions in batch")
        self.object_features = np.stack([t.appearance for t in tubelets]) if tubelets else np.zeros((0, 0))
        self.clip_pairs = [c.pairs() for c in clips]
        self.pairs: tuple[ClipPair, ...] = tuple(p for ps in self.clip_pairs for p in ps)
        self.pair_clip = np.array([p.clip_index for p in self.pairs], dtype=np.int64)
        self.subject_index = np.array([self.object_index[p.subject.tubelet_id] for p in self.pairs], dtype=np.int64)
        self.object_index_arr = np.array([self.object_index[p.object.tubelet_id] for p in self.pairs], dtype=np.int64)
        self.pair_spatial = (
            np.stack([pair_spatial(p.subject, p.object) for p in self.pairs]) if self.pairs else np.zeros((0, 10))
        )
        if targets is not None and targets.shape[0] != len(self.pairs):
            raise ValueError("targets must have one row per pair")
        self.targets = targets
        self.spatial_graphs: list[SpatialGraph] = [build_spatial_graph(c, cooc) for c in clips]

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    # -- object-level spatial graphs -------------------------------------

    def _spatial(self, kind: str) -> EdgeList:
        mode = self.cfg.spatial_mode
        off = mode == "off" or (kind == "pos" and mode == "sem_only") or (kind == "sem" and mode == "pos_only")
        if off:
            return EdgeList.empty(len(self.tubelets))
        weighted = self.cfg.spatial_affinity
        parts = [g.pos_edges(weighted) if kind == "pos" else g.sem_edges(weighted) for g in self.spatial_graphs]
        return EdgeList.concat(parts)

    @cached_property
    def pos_edges(self) -> EdgeList:
        return self._spatial("pos")

    @cached_property
    def sem_edges(self) -> EdgeList:
        return self._spatial("sem")

    # -- relation-level spatial graphs (temporal-to-spatial variant) ------

    def _pair_spatial(self, kind: str) -> EdgeList:
        mode = self.cfg.spatial_mode
        off = mode == "off" or (kind == "pos" and mode == "sem_only") or (kind == "sem" and mode == "pos_only")
        if off:
            return EdgeList.empty(self.num_pairs)
        parts = [
            pair_spatial_edges(g, ps, kind, weighted=self.cfg.spatial_affinity)
            for g, ps in zip(self.spatial_graphs, self.clip_pairs)
        ]
        return EdgeList.concat(parts)

    @cached_property
    def pair_pos_edges(self) -> EdgeList:
        return self._pair_spatial("pos")

    @cached_property
    def pair_sem_edges(self) -> EdgeList:
        return self._pair_spatial("sem")

    # -- temporal graphs --------------------------------------------------

    @cached_property
    def temporal_edges(self) -> EdgeList:
        if self.cfg.temporal_mode == "off":
            return EdgeList.empty(self.num_pairs)
        dense = self.cfg.temporal_mode == "dense_unweighted"
        return build_temporal_graph(self.clips, self.cfg.affinity, self.cfg.temporal_direction, dense=dense).edges

    @cached_property
    def object_temporal_edges(self) -> EdgeList:
        if self.cfg.temporal_mode == "off":
            return EdgeList.empty(len(self.tubelets))
        dense = self.cfg.temporal_mode == "dense_unweighted"
        return build_object_temporal_graph(self.clips, self.cfg.affinity, self.cfg.temporal_direction, dense=dense)

    @cached_property
    def aggregators(self) -> dict[str, MeanAggregator]:
        arch = self.cfg.architecture
        if arch == "reversed":
            return {
                "temporal": MeanAggregator(self.object_temporal_edges),
                "pos": MeanAggregator(self.pair_pos_edges),
                "sem": MeanAggregator(self.pair_sem_edges),
            }
        out = {"pos": MeanAggregator(self.pos_edges), "sem": MeanAggregator(self.sem_edges)}
        if arch == "pure_object":
            out["temporal"] = MeanAggregator(self.object_temporal_edges)
        else:
            out["temporal"] = MeanAggregator(self.temporal_edges)
        return out


def chunk_clips(clips: Sequence[Clip], budget: int) -> list[list[Clip]]:
    """Consecutive runs of at most ``budget`` clips."""
    runs: list[list[Clip]] = []
    cur: list[Clip] = []
    for c in clips:
        if cur and (len(cur) >= budget or c.clip_index != cur[-1].clip_index + 1):
            runs.append(cur)
            cur = []
        cur.append(c)
    if cur:
        runs.append(cur)
    return runs
