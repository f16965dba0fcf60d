"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line (collected again in the run summary) and
asserts the criterion at its stated tolerance. The training-based checks use the
desk-scale width of 64 with the default 20-epoch schedule.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from hcmvrd.association import AssocConfig, associate, associate_chains
from hcmvrd.cli import DESK_CONFIG
from hcmvrd.core import BoundingBox, save_prediction_dir
from hcmvrd.evaluation import evaluate, ground_truth_as_predictions, reldet_eval
from hcmvrd.geometry import iou
from hcmvrd.neural.params import ARCHITECTURES
from hcmvrd.oracles import brute_force_associate, exhaustive_reldet, pixel_iou
from hcmvrd.pipeline import PipelineConfig, predict, train
from hcmvrd.pipeline.config import TrainingConfig
from hcmvrd.pipeline.predict import save_clip_relations
from hcmvrd.pipeline.verify import model_gradcheck, perturbation_check
from hcmvrd.synthetic import (
    association_scenario,
    default_scenario,
    generate,
    imbalance_scenario,
    random_clip_relations,
    random_detection_instance,
    save_scenario,
)

BASE = replace(DESK_CONFIG, training=TrainingConfig(epochs=20, lr_drop_epoch=10, seed=0))


def run_variant(scn, cfg, test_input=None, mode="greedy"):
    res = train(scn.train, scn.features, cfg)
    clip_rels = predict(test_input if test_input is not None else scn.test, scn.features, res.params, res.vocab, cfg)
    return res, clip_rels, evaluate({v: associate(r, AssocConfig(mode)) for v, r in clip_rels.items()}, scn.test)


@pytest.fixture(scope="module")
def default_scn():
    return generate(default_scenario(0))


# -- 1 ----------------------------------------------------------------------


def test_gradient_integrity(verdict):
    started = time.perf_counter()
    errors = model_gradcheck(0, ARCHITECTURES)
    elapsed = time.perf_counter() - started
    worst = max(errors.values())
    detail = ", ".join(f"{a} {e:.2e}" for a, e in errors.items()) + f"; {elapsed:.1f}s"
    assert verdict("1 gradient integrity", worst < 1e-4 and elapsed < 60, detail)


# -- 2 ----------------------------------------------------------------------


def _interval_iou(a, b, d):
    """Bounds on the IoU of any two boxes whose edges lie within ``d`` of ``a`` and ``b``."""

    def grow(box, s):
        return (box[0] - s, box[1] - s, box[2] + s, box[3] + s)

    def area(box):
        return max(box[2] - box[0], 0.0) * max(box[3] - box[1], 0.0)

    def inter(p, q):
        w = min(p[2], q[2]) - max(p[0], q[0])
        h = min(p[3], q[3]) - max(p[1], q[1])
        return max(w, 0.0) * max(h, 0.0)

    lo_i, hi_i = inter(grow(a, -d), grow(b, -d)), inter(grow(a, d), grow(b, d))
    lo_u = area(grow(a, -d)) + area(grow(b, -d)) - hi_i
    hi_u = area(grow(a, d)) + area(grow(b, d)) - lo_i
    return lo_i / hi_u, min(hi_i / max(lo_u, 1e-12), 1.0)


def test_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    resolution = 4
    iou_bad = 0
    for _ in range(1000):
        xy = rng.uniform(0, 40, size=(2, 2))
        wh = rng.uniform(1, 25, size=(2, 2))
        a, b = (tuple(np.concatenate([xy[i], xy[i] + wh[i]])) for i in range(2))
        got = iou(BoundingBox(*a), BoundingBox(*b))
        grid = pixel_iou(a, b, resolution)
        lo, hi = _interval_iou(a, b, 0.5 / resolution)
        iou_bad += not (lo - 1e-12 <= got <= hi + 1e-12 and lo - 1e-12 <= grid <= hi + 1e-12)

    assoc_bad = 0
    for seed in range(1000):
        rels = random_clip_relations(seed)
        for mode in ("greedy", "relaxed", "vlink"):
            fast = [[id(m) for m in c] for c in associate_chains(rels, AssocConfig(mode))]
            slow = [[id(m) for m in c] for c in brute_force_associate(rels, mode, 0.5)]
            assoc_bad += fast != slow

    eval_bad = 0
    for seed in range(200):
        ann, preds = random_detection_instance(seed)
        _, _, per_video = reldet_eval({ann.video_id: preds}, [ann])
        got, want = per_video[ann.video_id], exhaustive_reldet(preds, ann)
        eval_bad += abs(got["ap"] - float(want["ap"])) > 1e-12
        eval_bad += got["r50"] != float(want["r50"]) or got["r100"] != float(want["r100"])

    detail = f"IoU misses {iou_bad}/1000, association mismatches {assoc_bad}/3000, RelDet mismatches {eval_bad}/200"
    assert verdict("2 oracle equivalence", iou_bad == assoc_bad == eval_bad == 0, detail)


# -- 3 ----------------------------------------------------------------------


def test_temporal_causality(verdict):
    forward_ok = perturbed_moved = 0
    for seed in range(100):
        unchanged, changed = perturbation_check(seed, "forward", ARCHITECTURES[seed % len(ARCHITECTURES)])
        forward_ok += unchanged
        perturbed_moved += changed
    violations = sum(not perturbation_check(seed, "bidirectional")[0] for seed in range(20))
    ok = forward_ok == 100 and perturbed_moved == 100 and violations >= 1
    detail = f"forward bit-identical {forward_ok}/100 (perturbed clip moved {perturbed_moved}/100); bidirectional violations {violations}/20"
    assert verdict("3 temporal causality", ok, detail)


# -- 4 ----------------------------------------------------------------------


@pytest.mark.slow
def test_ablation_trend(default_scn, verdict):
    assert (len(default_scn.train), len(default_scn.test)) == (200, 50)
    variants = {
        "Base": {"spatial_mode": "off", "temporal_mode": "off"},
        "Base+S-GCNs": {"temporal_mode": "off"},
        "Base+S-GCNs+T-GCN": {},
    }
    started = time.perf_counter()
    p1 = {}
    for name, over in variants.items():
        scores = []
        for seed in (0, 1, 2):
            cfg = replace(BASE.with_overrides(over), training=replace(BASE.training, seed=seed))
            scores.append(run_variant(default_scn, cfg)[2].reltag["p1"])
        p1[name] = float(np.mean(scores))
    elapsed = time.perf_counter() - started
    base, spatial, full = p1.values()
    ok = base < spatial < full and full >= base + 0.05 and elapsed < 30 * 60
    detail = ", ".join(f"{k} {100 * v:.2f}" for k, v in p1.items()) + f"; {elapsed / 60:.1f} min"
    assert verdict("4 ablation trend", ok, detail)


# -- 5 ----------------------------------------------------------------------


@pytest.mark.slow
def test_association_trend(verdict):
    scn = generate(association_scenario(0))
    res = train(scn.train, scn.features, BASE)
    clip_rels = predict(scn.test_input, scn.features, res.params, res.vocab, BASE)
    maps = {}
    for mode in ("greedy", "relaxed"):
        maps[mode] = evaluate({v: associate(r, AssocConfig(mode)) for v, r in clip_rels.items()}, scn.test).reldet["map"]
    detail = f"HCM-RG mAP {100 * maps['relaxed']:.2f} vs HCM-G {100 * maps['greedy']:.2f}"
    assert verdict("5 association trend", maps["relaxed"] > maps["greedy"], detail)


# -- 6 ----------------------------------------------------------------------


@pytest.mark.slow
def test_loss_ablation(verdict):
    scn = generate(imbalance_scenario(0))
    rate = scn.positive_rate()
    p1 = {loss: run_variant(scn, replace(BASE, loss=loss))[2].reltag["p1"] for loss in ("focal", "bce")}
    ok = rate <= 0.02 and p1["focal"] >= p1["bce"]
    detail = f"positive rate {100 * rate:.2f}%, focal P@1 {100 * p1['focal']:.2f} vs BCE {100 * p1['bce']:.2f}"
    assert verdict("6 loss ablation", ok, detail)


# -- 7 ----------------------------------------------------------------------


def _full_run(root):
    scn = generate(default_scenario(5, train_videos=12, test_videos=4, feature_dim=32))
    save_scenario(scn, root / "data")
    cfg = PipelineConfig(hidden=16, training=TrainingConfig(epochs=3, lr_drop_epoch=2, seed=4))
    res = train(scn.train, scn.features, cfg, out_dir=root / "model")
    clip_rels = predict(scn.test, scn.features, res.params, res.vocab, cfg)
    save_clip_relations(clip_rels, root / "clip")
    videos = {v: associate(r, AssocConfig("relaxed")) for v, r in clip_rels.items()}
    save_prediction_dir(videos, root / "video")
    evaluate(videos, scn.test).write_json(root / "report.json")
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_determinism(tmp_path, verdict):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a, b = _full_run(tmp_path / "a"), _full_run(tmp_path / "b")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    has_all = any(k.startswith("model/") for k in a) and any(k.startswith("video/") for k in a) and "report.json" in a
    detail = f"{len(a)} files compared, {len(differing)} differ"
    assert verdict("7 determinism", has_all and not differing, detail)


# -- 8 ----------------------------------------------------------------------


def test_metric_sanity(default_scn, verdict):
    perfect = evaluate({a.video_id: ground_truth_as_predictions(a) for a in default_scn.test}, default_scn.test)
    empty = evaluate({}, default_scn.test)
    top = [perfect.reldet["map"], perfect.reldet["r50"], perfect.reldet["r100"], perfect.reltag["p1"]]
    ok = top == [1.0] * 4 and empty.row() == [0.0] * 6
    detail = f"ground truth -> {top}, empty -> {empty.row()}"
    assert verdict("8 metric sanity", ok, detail)
