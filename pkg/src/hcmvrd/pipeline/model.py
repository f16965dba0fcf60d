"""Forward pass of the hierarchical context model and its architectural variants."""

from __future__ import annotations

import numpy as np

from ..neural import autodiff as ad
from ..neural.autodiff import Tensor
from ..neural.layers import conv_stack, focal_loss_with_logits, gated_fusion, mlp_head, relation_feature
from ..neural.params import ModelDims, ModelParams
from .batch import ClipBatch
from .config import PipelineConfig


def model_dims(cfg: PipelineConfig, input_dim: int, num_predicates: int) -> ModelDims:
    return ModelDims(input_dim, cfg.hidden, num_predicates, cfg.depth, cfg.architecture)


def forward_logits(batch: ClipBatch, params: ModelParams, relu_record: list | None = None) -> Tensor:
    """Pair-by-predicate logits for every relation node of ``batch``.

    hierarchical: object spatial GCNs -> gated fusion -> relation features -> relation temporal GCN
    parallel:     (spatial branch -> relation features) fused with (relation features -> temporal GCN)
    reversed:     object temporal GCN -> relation features -> relation spatial GCNs -> gated fusion
    pure_object:  object spatial GCNs -> gated fusion -> object temporal GCN -> relation features
    """
    arch = params.dims.architecture
    if arch != batch.cfg.architecture:
        raise ValueError(f"parameters are for {arch!r}, batch built for {batch.cfg.architecture!r}")
    if batch.object_features.shape[1] != params.dims.input_dim:
        raise ValueError("appearance dimension does not match the model input")
    agg = batch.aggregators
    fa = Tensor(batch.object_features)
    si, oi, rp = batch.subject_index, batch.object_index_arr, batch.pair_spatial

    def spatial(x):
        f_pos = conv_stack(x, agg["pos"], params.stack("pos"), relu_record)
        f_sem = conv_stack(x, agg["sem"], params.stack("sem"), relu_record)
        return gated_fusion(f_pos, f_sem, params.linear("gate"), params.linear("fuse"))

    if arch == "hierarchical":
        f_rel = relation_feature(spatial(fa), si, oi, rp, params.linear("pair"), params.linear("rel"))
        out = conv_stack(f_rel, agg["temporal"], params.stack("temporal"), relu_record)
    elif arch == "parallel":
        rel_spa = relation_feature(spatial(fa), si, oi, rp, params.linear("pair"), params.linear("rel"))
        rel_raw = relation_feature(fa, si, oi, rp, params.linear("raw_pair"), params.linear("raw_rel"))
        f_tem = conv_stack(rel_raw, agg["temporal"], params.stack("temporal"), relu_record)
        out = gated_fusion(rel_spa, f_tem, params.linear("out_gate"), params.linear("out_fuse"))
    elif arch == "reversed":
        f_obj = conv_stack(fa, agg["temporal"], params.stack("temporal"), relu_record)
        f_rel = relation_feature(f_obj, si, oi, rp, params.linear("pair"), params.linear("rel"))
        out = spatial(f_rel)
    elif arch == "pure_object":
        f_obj = conv_stack(spatial(fa), agg["temporal"], params.stack("temporal"), relu_record)
        out = relation_feature(f_obj, si, oi, rp, params.linear("pair"), params.linear("rel"))
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    return mlp_head(out, params.linear("head.0"), params.linear("head.1"), relu_record)


def forward(batch: ClipBatch, params: ModelParams, relu_record: list | None = None) -> Tensor:
    """Relation scores in (0, 1), one row per pair node."""
    return ad.sigmoid(forward_logits(batch, params, relu_record))


def batch_loss(batch: ClipBatch, params: ModelParams, cfg: PipelineConfig, relu_record: list | None = None) -> Tensor:
    if batch.targets is None:
        raise ValueError("batch has no targets")
    logits = forward_logits(batch, params, relu_record)
    if cfg.loss == "bce":
        return focal_loss_with_logits(logits, batch.targets, gamma=0.0, balance=None)
    return focal_loss_with_logits(logits, batch.targets, gamma=cfg.focal_gamma, balance=cfg.focal_balance)


def clip_rows(batch: ClipBatch, clip_index: int) -> np.ndarray:
    return np.nonzero(batch.pair_clip == clip_index)[0]
