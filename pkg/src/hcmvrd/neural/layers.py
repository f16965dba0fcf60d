"""HCM building blocks: mean-aggregation graph convolution, gated fusion,
relation features, the two-layer head and the binary focal loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ..graphs import EdgeList
from . import autodiff as ad
from .autodiff import Tensor

SCORE_EPS = 1e-7


@dataclass
class Linear:
    weight: Tensor  # (in, out)
    bias: Tensor  # (1, out)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.weight.shape[0]:
            raise ValueError(f"linear expects {self.weight.shape[0]} inputs, got {x.shape[1]}")
        return ad.matmul(x, self.weight) + self.bias

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class LayerParams:
    self_weight: Tensor  # (in, out)
    neighbor_weight: Tensor  # (in, out)
    bias: Tensor  # (1, out)


class MeanAggregator:
    """Row-normalised sparse adjacency: row v holds ``w_uv / sum_u w_uv`` for in-edges ``u -> v``.

    Nodes without in-edges get an all-zero row, i.e. a zero neighbour message.
    """

    def __init__(self, edges: EdgeList):
        if len(edges) and np.any(edges.weight <= 0.0):
            raise ValueError("edge weights must be positive")
        n = edges.num_nodes
        if len(edges) and (edges.src.max() >= n or edges.dst.max() >= n or edges.src.min() < 0 or edges.dst.min() < 0):
            raise ValueError("edge endpoint out of range")
        totals = np.zeros(n)
        np.add.at(totals, edges.dst, edges.weight)
        vals = edges.weight / totals[edges.dst] if len(edges) else edges.weight
        # rows ordered by destination, entries inside a row keep the edge order
        order = np.argsort(edges.dst, kind="stable")
        self.matrix = sp.csr_matrix((vals[order], (edges.dst[order], edges.src[order])), shape=(n, n))
        self.transpose = self.matrix.T.tocsr()
        self.num_nodes = n

    def __call__(self, x: Tensor) -> Tensor:
        return ad.spmm(self.matrix, x, self.transpose)


def graph_conv(
    features: Tensor,
    edges: EdgeList | MeanAggregator,
    params: LayerParams,
    activation: bool = True,
    relu_record: list | None = None,
) -> Tensor:
    agg = edges if isinstance(edges, MeanAggregator) else MeanAggregator(edges)
    if features.shape[0] != agg.num_nodes:
        raise ValueError(f"{features.shape[0]} feature rows for a {agg.num_nodes}-node graph")
    if features.shape[1] != params.self_weight.shape[0]:
        raise ValueError("feature width does not match layer input size")
    out = ad.matmul(features, params.self_weight) + ad.matmul(agg(features), params.neighbor_weight) + params.bias
    return ad.relu(out, relu_record) if activation else out


def conv_stack(features: Tensor, edges: EdgeList | MeanAggregator, layers: list[LayerParams], relu_record: list | None = None) -> Tensor:
    """Layers applied in sequence; ReLU after every layer except the last."""
    agg = edges if isinstance(edges, MeanAggregator) else MeanAggregator(edges)
    h = features
    for i, layer in enumerate(layers):
        h = graph_conv(h, agg, layer, activation=i < len(layers) - 1, relu_record=relu_record)
    return h


def gated_fusion(f_pos: Tensor, f_sem: Tensor, gate: Linear, fuse: Linear) -> Tensor:
    if f_pos.shape[0] != f_sem.shape[0]:
        raise ValueError("row count mismatch")
    joint = ad.concat([f_pos, f_sem], axis=1)
    return ad.sigmoid(gate(joint)) * fuse(joint)


def relation_feature(
    f_spa: Tensor,
    subject_index: np.ndarray,
    object_index: np.ndarray,
    pair_spatial: np.ndarray,
    pair_proj: Linear,
    rel_proj: Linear,
) -> Tensor:
    """Row r: ``rel_proj([pair_proj([f_spa[s_r]; f_spa[o_r]]); pair_spatial[r]])``."""
    if len(subject_index) != len(object_index) or len(subject_index) != len(pair_spatial):
        raise ValueError("pair index / feature length mismatch")
    joint = ad.concat([ad.take_rows(f_spa, subject_index), ad.take_rows(f_spa, object_index)], axis=1)
    return rel_proj(ad.concat([pair_proj(joint), Tensor(pair_spatial)], axis=1))


def mlp_head(x: Tensor, hidden: Linear, out: Linear, relu_record: list | None = None) -> Tensor:
    """Logits of the two-layer classifier; the caller applies the sigmoid."""
    return out(ad.relu(hidden(x), relu_record))


def _pt_weights(targets: np.ndarray, balance: float | None) -> np.ndarray:
    if balance is None:
        return np.ones_like(targets)
    return np.where(targets > 0.5, balance, 1.0 - balance)


def focal_loss(scores: Tensor, targets: np.ndarray, gamma: float = 2.0, balance: float | None = 0.25) -> Tensor:
    """Mean binary focal loss over all entries.

    ``balance`` weights positives (``1 - balance`` weights negatives); ``None``
    disables weighting, and together with ``gamma=0`` gives plain BCE.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if scores.shape != targets.shape:
        raise ValueError(f"scores {scores.shape} vs targets {targets.shape}")
    p = np.clip(scores.data, SCORE_EPS, 1.0 - SCORE_EPS)
    clipped = (scores.data < SCORE_EPS) | (scores.data > 1.0 - SCORE_EPS)
    pos = targets > 0.5
    pt = np.where(pos, p, 1.0 - p)
    a = _pt_weights(targets, balance)
    one_minus = 1.0 - pt
    log_pt = np.log(pt)
    n = targets.size
    value = np.sum(-a * one_minus**gamma * log_pt) / n

    def backward(g):
        if gamma == 0.0:
            dpt = -a / pt
        else:
            dpt = a * (gamma * one_minus ** (gamma - 1.0) * log_pt - one_minus**gamma / pt)
        grad = np.where(pos, dpt, -dpt) / n
        grad = np.where(clipped, 0.0, grad)
        scores._accumulate(g * grad)

    return ad._node(value, (scores,), backward)


def focal_loss_with_logits(logits: Tensor, targets: np.ndarray, gamma: float = 2.0, balance: float | None = 0.25) -> Tensor:
    """``focal_loss(sigmoid(logits), ...)`` evaluated in log space.

    ``log p_t`` comes from a softplus instead of ``log(1 - sigmoid(z))``, which
    keeps full precision for confident predictions. Scores are clamped to the
    same ``[SCORE_EPS, 1 - SCORE_EPS]`` range as :func:`focal_loss`.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise ValueError(f"logits {logits.shape} vs targets {targets.shape}")
    sign = np.where(targets > 0.5, 1.0, -1.0)
    sz = sign * logits.data
    log_pt = -np.logaddexp(0.0, -sz)
    one_minus = expit(-sz)  # 1 - p_t
    lo, hi = np.log(SCORE_EPS), np.log1p(-SCORE_EPS)
    clipped = (log_pt < lo) | (log_pt > hi)
    log_pt = np.clip(log_pt, lo, hi)
    one_minus = np.clip(one_minus, SCORE_EPS, 1.0 - SCORE_EPS)
    pt = 1.0 - one_minus
    a = _pt_weights(targets, balance)
    n = targets.size
    value = np.sum(-a * one_minus**gamma * log_pt) / n

    def backward(g):
        # d/dz of -a (1-pt)^gamma log pt, using dpt/dz = sign * pt (1-pt)
        grad = sign * a * (gamma * one_minus**gamma * pt * log_pt - one_minus ** (gamma + 1.0)) / n
        grad = np.where(clipped, 0.0, grad)
        logits._accumulate(g * grad)

    return ad._node(value, (logits,), backward)
