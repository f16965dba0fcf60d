"""Self-checks of the full model: finite-difference gradients and temporal causality."""

from __future__ import annotations

import dataclasses

import numpy as np

from ..core import Clip

from ..graphs import compute_cooccurrence
from ..neural.gradcheck import grad_check
from ..neural.params import ARCHITECTURES, init_params
from .clips import FeatureIndex
from .config import PipelineConfig, TrainingConfig
from .batch import ClipBatch
from .model import batch_loss, clip_rows, forward, model_dims
from .train import Vocabulary, video_batches

KINK_MARGIN = 1e-3


def tiny_batches(seed: int, cfg: PipelineConfig, feature_dim: int = 8):
    """Two synthetic videos of four clips with three tubelets each."""
    from ..synthetic import ScenarioConfig, generate

    conf = ScenarioConfig(seed=seed, train_videos=2, test_videos=0, frame_count=75, objects=(3, 3), feature_dim=feature_dim)
    scn = generate(conf)
    vocab = Vocabulary(conf.predicates, compute_cooccurrence(scn.train))
    index = FeatureIndex(scn.features)
    batches = [b for ann in scn.train for b in video_batches(ann, index, vocab, cfg)]
    return batches, vocab, index.dim


def _min_kink_distance(batches, params, cfg) -> float:
    record: list[np.ndarray] = []
    for b in batches:
        batch_loss(b, params, cfg, relu_record=record)
    return min((float(np.min(np.abs(z))) for z in record if z.size), default=np.inf)


def model_gradcheck(
    seed: int = 0,
    architectures=ARCHITECTURES,
    hidden: int = 6,
    depth: int = 3,
    direction: str = "forward",
    max_tries: int = 50,
) -> dict[str, float]:
    """Max relative gradient error per architecture.

    Parameters (biases included, drawn small and non-zero) are resampled until
    every ReLU input is at least ``KINK_MARGIN`` away from zero.
    """
    out = {}
    for arch in architectures:
        cfg = PipelineConfig(hidden=hidden, depth=depth, architecture=arch, temporal_direction=direction, training=TrainingConfig(seed=seed))
        batches, vocab, dim = tiny_batches(seed, cfg)
        dims = model_dims(cfg, dim, len(vocab.predicates))
        rng = np.random.default_rng([seed, ARCHITECTURES.index(arch)])
        for _ in range(max_tries):
            params = init_params(dims, int(rng.integers(2**31)))
            for name, t in params.named():
                if name.endswith(".bias") or name.endswith(".b"):
                    t.data[...] = rng.uniform(-0.1, 0.1, size=t.data.shape)
            if _min_kink_distance(batches, params, cfg) > KINK_MARGIN:
                break
        else:
            raise RuntimeError(f"no kink-free parameter draw for {arch} after {max_tries} tries")

        def loss():
            total = batch_loss(batches[0], params, cfg)
            for b in batches[1:]:
                total = total + batch_loss(b, params, cfg)
            return total

        out[arch] = grad_check(loss, list(params))
    return out


def _with_appearance(clip: Clip, rng: np.random.Generator, scale: float) -> Clip:
    tubes = tuple(
        dataclasses.replace(t, appearance=t.appearance + rng.normal(scale=scale, size=t.appearance.shape))
        for t in clip.tubelets
    )
    return dataclasses.replace(clip, tubelets=tubes)


def perturbation_check(seed: int, direction: str = "forward", architecture: str = "hierarchical", hidden: int = 6) -> tuple[bool, bool]:
    """Perturb every appearance feature of one clip and compare scores of the clip before it.

    Returns ``(earlier_clip_unchanged, perturbed_clip_changed)``; the first is a
    bit-level comparison.
    """
    rng = np.random.default_rng([seed, 17])
    cfg = PipelineConfig(hidden=hidden, depth=2, architecture=architecture, temporal_direction=direction, training=TrainingConfig(seed=seed))
    batches, vocab, dim = tiny_batches(seed, cfg)
    batch = batches[int(rng.integers(len(batches)))]
    clips = list(batch.clips)
    k = int(rng.integers(len(clips) - 1))
    params = init_params(model_dims(cfg, dim, len(vocab.predicates)), int(rng.integers(2**31)))
    for name, t in params.named():
        if name.endswith(".bias") or name.endswith(".b"):
            t.data[...] = rng.uniform(-0.1, 0.1, size=t.data.shape)
    clips[k + 1] = _with_appearance(clips[k + 1], rng, scale=0.5)
    other = ClipBatch(batch.video_id, clips, batch.cooc, cfg, batch.targets)
    before, after = forward(batch, params).data, forward(other, params).data
    rows_k, rows_next = clip_rows(batch, batch.clips[k].clip_index), clip_rows(batch, batch.clips[k + 1].clip_index)
    unchanged = before[rows_k].tobytes() == after[rows_k].tobytes()
    changed = not np.array_equal(before[rows_next], after[rows_next])
    return unchanged, changed
