"""Spatial (per-clip, object level) and temporal (cross-clip, relation level) graph construction."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Clip, ClipPair, DatasetAnnotation, Tubelet
from .geometry import mean_iou, volume_iou

DIRECTIONS = ("forward", "backward", "bidirectional")


@dataclass(frozen=True)
class EdgeList:
    """Weighted directed edges ``src -> dst`` over ``num_nodes`` nodes."""

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    num_nodes: int

    def __post_init__(self):
        for name in ("src", "dst"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64).reshape(-1))
        object.__setattr__(self, "weight", np.asarray(self.weight, dtype=np.float64).reshape(-1))
        if not (len(self.src) == len(self.dst) == len(self.weight)):
            raise ValueError("src, dst and weight must have equal length")

    @classmethod
    def empty(cls, num_nodes: int) -> "EdgeList":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), num_nodes)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, float]], num_nodes: int) -> "EdgeList":
        triples = sorted(triples)
        if not triples:
            return cls.empty(num_nodes)
        s, d, w = zip(*triples)
        return cls(np.array(s), np.array(d), np.array(w), num_nodes)

    @classmethod
    def from_affinity(cls, matrix: np.ndarray) -> "EdgeList":
        """Edges for every nonzero entry ``matrix[dst, src]``."""
        dst, src = np.nonzero(matrix)
        order = np.lexsort((dst, src))
        return cls(src[order], dst[order], matrix[dst[order], src[order]], matrix.shape[0])

    @classmethod
    def concat(cls, parts: Sequence["EdgeList"]) -> "EdgeList":
        """Block-diagonal union; node ids of each part are shifted past the previous parts."""
        offset = 0
        srcs, dsts, ws = [], [], []
        for p in parts:
            srcs.append(p.src + offset)
            dsts.append(p.dst + offset)
            ws.append(p.weight)
            offset += p.num_nodes
        if not parts:
            return cls.empty(0)
        return cls(np.concatenate(srcs), np.concatenate(dsts), np.concatenate(ws), offset)

    def __len__(self) -> int:
        return len(self.src)

    def triples(self) -> list[tuple[int, int, float]]:
        return [(int(s), int(d), float(w)) for s, d, w in zip(self.src, self.dst, self.weight)]

    def unweighted(self) -> "EdgeList":
        return EdgeList(self.src, self.dst, np.ones_like(self.weight), self.num_nodes)


@dataclass(frozen=True)
class AffinityConfig:
    alpha: float = 0.8
    beta: float = 0.7
    lam: float = 0.8

    def __post_init__(self):
        for name in ("alpha", "beta", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class CooccurrenceTable:
    categories: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (len(self.categories),) * 2:
            raise ValueError("matrix shape does not match vocabulary")
        object.__setattr__(self, "matrix", m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CooccurrenceTable):
            return NotImplemented
        return self.categories == other.categories and np.array_equal(self.matrix, other.matrix)

    def index(self, category: str) -> int:
        return self.categories.index(category)

    def __call__(self, a: str, b: str) -> float:
        try:
            return float(self.matrix[self.index(a), self.index(b)])
        except ValueError:
            return 0.0  # category unseen in training

    def to_dict(self) -> dict:
        return {"categories": list(self.categories), "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "CooccurrenceTable":
        return cls(tuple(doc["categories"]), np.array(doc["matrix"], dtype=np.float64))


def compute_cooccurrence(train: Sequence[DatasetAnnotation]) -> CooccurrenceTable:
    """Per-video Jaccard co-occurrence: #videos with both / #videos with either."""
    if not train:
        raise ValueError("empty training set")
    categories = tuple(sorted(set().union(*(a.categories for a in train))))
    idx = {c: i for i, c in enumerate(categories)}
    presence = np.zeros((len(train), len(categories)), dtype=np.int64)
    for v, ann in enumerate(train):
        for c in ann.categories:
            presence[v, idx[c]] = 1
    both = presence.T @ presence
    count = np.diag(both)
    either = count[:, None] + count[None, :] - both
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(either > 0, both / np.maximum(either, 1), 0.0)
    return CooccurrenceTable(categories, matrix)


@dataclass(frozen=True, eq=False)
class SpatialGraph:
    clip_index: int
    nodes: tuple[Tubelet, ...]
    pos_affinity: np.ndarray
    sem_affinity: np.ndarray

    def pos_edges(self, weighted: bool = True) -> EdgeList:
        if weighted:
            return EdgeList.from_affinity(self.pos_affinity)
        return _complete_graph(len(self.nodes))

    def sem_edges(self, weighted: bool = True) -> EdgeList:
        if weighted:
            return EdgeList.from_affinity(self.sem_affinity)
        return _complete_graph(len(self.nodes))


def _complete_graph(n: int) -> EdgeList:
    return EdgeList.from_triples(((u, v, 1.0) for u in range(n) for v in range(n) if u != v), n)


def build_spatial_graph(clip: Clip, cooc: CooccurrenceTable) -> SpatialGraph:
    nodes = clip.tubelets
    m = len(nodes)
    pos = np.eye(m)
    sem = np.zeros((m, m))
    for i, j in itertools.combinations(range(m), 2):
        pos[i, j] = pos[j, i] = mean_iou(nodes[i], nodes[j])
        sem[i, j] = sem[j, i] = cooc(nodes[i].category, nodes[j].category)
    return SpatialGraph(clip.clip_index, nodes, pos, sem)


def appearance_affinity(a: Tubelet, b: Tubelet, alpha: float) -> float:
    fa, fb = a.appearance, b.appearance
    if fa.shape != fb.shape:
        raise ValueError("feature dimension mismatch")
    na, nb = np.linalg.norm(fa), np.linalg.norm(fb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate feature")
    sim = float(np.dot(fa, fb) / (na * nb))
    return sim if sim > alpha else 0.0


def location_affinity(a: Tubelet, b: Tubelet, beta: float, overlap_only: bool = True) -> float:
    """Thresholded volume IoU.

    Adjacent clips share only half their frames, so by default the volumes are
    compared on the shared frames; ``overlap_only=False`` uses whole tubelets.
    """
    v = volume_iou(a, b, overlap_only=overlap_only)
    return v if v > beta else 0.0


def _tubelet_affinities(prev: Sequence[Tubelet], nxt: Sequence[Tubelet], cfg: AffinityConfig):
    ap = np.array([[appearance_affinity(a, b, cfg.alpha) for b in nxt] for a in prev]).reshape(len(prev), len(nxt))
    loc = np.array([[location_affinity(a, b, cfg.beta) for b in nxt] for a in prev]).reshape(len(prev), len(nxt))
    return ap, loc


def temporal_affinity(src: ClipPair, dst: ClipPair, cfg: AffinityConfig) -> float:
    if dst.clip_index != src.clip_index + 1:
        raise ValueError("non-adjacent clips")
    ap = min(
        appearance_affinity(src.subject, dst.subject, cfg.alpha),
        appearance_affinity(src.object, dst.object, cfg.alpha),
    )
    loc = min(
        location_affinity(src.subject, dst.subject, cfg.beta),
        location_affinity(src.object, dst.object, cfg.beta),
    )
    return cfg.lam * ap + (1.0 - cfg.lam) * loc


@dataclass(frozen=True, eq=False)
class TemporalGraph:
    nodes: tuple[ClipPair, ...]
    edges: EdgeList
    direction: str

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "nodes": [
                {"index": i, "clip": p.clip_index, "subject": p.subject.tubelet_id, "object": p.object.tubelet_id}
                for i, p in enumerate(self.nodes)
            ],
            "edges": [list(t) for t in self.edges.triples()],
        }


def _orient(pairs: Iterable[tuple[int, int, float]], direction: str) -> list[tuple[int, int, float]]:
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    out = []
    for a, b, w in pairs:
        if direction in ("forward", "bidirectional"):
            out.append((a, b, w))
        if direction in ("backward", "bidirectional"):
            out.append((b, a, w))
    return out


def build_temporal_graph(
    clips: Sequence[Clip],
    cfg: AffinityConfig,
    direction: str = "forward",
    dense: bool = False,
) -> TemporalGraph:
    """Relation-level graph over all ordered pairs of all clips.

    Nodes are enumerated clip by clip in ``Clip.pairs()`` order. An edge joins a
    pair in clip k to a pair in clip k+1 when the fused affinity is positive;
    ``dense`` connects every such pair with weight 1 instead.
    """
    nodes: list[ClipPair] = []
    offsets = []
    clip_pairs = []
    for clip in clips:
        offsets.append(len(nodes))
        pairs = clip.pairs()
        clip_pairs.append(pairs)
        nodes.extend(pairs)

    forward_edges = []
    for k in range(len(clips) - 1):
        if clips[k + 1].clip_index != clips[k].clip_index + 1:
            continue
        prev, nxt = clips[k].tubelets, clips[k + 1].tubelets
        if not clip_pairs[k] or not clip_pairs[k + 1]:
            continue
        if not dense:
            ap, loc = _tubelet_affinities(prev, nxt, cfg)
        pi = {t.tubelet_id: i for i, t in enumerate(prev)}
        ni = {t.tubelet_id: i for i, t in enumerate(nxt)}
        for a, p in enumerate(clip_pairs[k]):
            for b, q in enumerate(clip_pairs[k + 1]):
                if dense:
                    w = 1.0
                else:
                    s0, o0 = pi[p.subject.tubelet_id], pi[p.object.tubelet_id]
                    s1, o1 = ni[q.subject.tubelet_id], ni[q.object.tubelet_id]
                    w = cfg.lam * min(ap[s0, s1], ap[o0, o1]) + (1.0 - cfg.lam) * min(loc[s0, s1], loc[o0, o1])
                if w > 0.0:
                    forward_edges.append((offsets[k] + a, offsets[k + 1] + b, float(w)))
    edges = EdgeList.from_triples(_orient(forward_edges, direction), len(nodes))
    return TemporalGraph(tuple(nodes), edges, direction)


def build_object_temporal_graph(
    clips: Sequence[Clip],
    cfg: AffinityConfig,
    direction: str = "forward",
    dense: bool = False,
) -> EdgeList:
    """Tubelet-level temporal edges between adjacent clips (object-node architectures).

    Weight is ``lam * appearance + (1 - lam) * location`` for each tubelet pair.
    """
    offsets = np.cumsum([0] + [len(c.tubelets) for c in clips])
    forward_edges = []
    for k in range(len(clips) - 1):
        if clips[k + 1].clip_index != clips[k].clip_index + 1:
            continue
        prev, nxt = clips[k].tubelets, clips[k + 1].tubelets
        if dense:
            w = np.ones((len(prev), len(nxt)))
        else:
            ap, loc = _tubelet_affinities(prev, nxt, cfg)
            w = cfg.lam * ap + (1.0 - cfg.lam) * loc
        for a in range(len(prev)):
            for b in range(len(nxt)):
                if w[a, b] > 0.0:
                    forward_edges.append((int(offsets[k] + a), int(offsets[k + 1] + b), float(w[a, b])))
    return EdgeList.from_triples(_orient(forward_edges, direction), int(offsets[-1]))


def pair_spatial_edges(graph: SpatialGraph, pairs: Sequence[ClipPair], kind: str, weighted: bool = True) -> EdgeList:
    """Relation-level spatial graph for one clip (temporal-to-spatial architecture).

    Two pairs are linked with the minimum of their subjects' and their objects'
    object-level affinity, mirroring how pair affinities are fused in time.
    """
    idx = {t.tubelet_id: i for i, t in enumerate(graph.nodes)}
    aff = graph.pos_affinity if kind == "pos" else graph.sem_affinity
    n = len(pairs)
    triples = []
    for u, p in enumerate(pairs):
        for v, q in enumerate(pairs):
            if not weighted:
                if u != v:
                    triples.append((u, v, 1.0))
                continue
            w = min(
                aff[idx[p.subject.tubelet_id], idx[q.subject.tubelet_id]],
                aff[idx[p.object.tubelet_id], idx[q.object.tubelet_id]],
            )
            if w > 0.0:
                triples.append((u, v, float(w)))
    return EdgeList.from_triples(triples, n)
