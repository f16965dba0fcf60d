"""Command-line entry point: synth, train, predict, associate, evaluate, gradcheck, ablate.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .association import MODES, AssocConfig, associate
from .core import DatasetError, FeatureFormatError, load_dataset, load_features, load_prediction_dir, save_prediction_dir
from .evaluation import EvalReport, evaluate, format_metric_table
from .graphs import DIRECTIONS
from .neural.optim import TrainingDiverged
from .neural.params import ARCHITECTURES
from .pipeline.config import LOSSES, ConfigError, PipelineConfig, load_config
from .pipeline.predict import load_clip_relations, predict, save_clip_relations
from .pipeline.train import load_trained, train

log = logging.getLogger("hcmvrd")

# without --config the CLI trains a narrow model suited to a desktop CPU;
# PipelineConfig() itself keeps the full 768-wide default
DESK_CONFIG = PipelineConfig(hidden=64)

VERBS = ("synth", "train", "predict", "associate", "evaluate", "gradcheck", "ablate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_tree(path: Path) -> dict[str, str]:
    if path.is_file():
        return {path.name: _sha256(path)}
    return {str(p.relative_to(path)): _sha256(p) for p in sorted(path.rglob("*")) if p.is_file()}


def write_manifest(out: Path, verb: str, config: dict | None, seeds: dict, inputs: dict[str, Path | None]) -> None:
    """Resolved config, seeds and sha256 digests of inputs and outputs; no timestamps."""
    outputs = {k: v for k, v in _digest_tree(out).items() if k != "manifest.json"}
    doc = {
        "verb": verb,
        "config": config,
        "seeds": seeds,
        "inputs": {name: _digest_tree(p) for name, p in sorted(inputs.items()) if p is not None},
        "outputs": outputs,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _existing(path: str | None, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{flag} {path}: no such file or directory")
    return p


def _out(path: str | None) -> Path:
    if path is None:
        raise UsageError("--out is required")
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _overrides(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _pipeline_config(args) -> PipelineConfig:
    cfg = load_config(_existing(args.config, "--config")) if args.config else DESK_CONFIG
    over = _overrides(args.set)
    for flag, key in (("arch", "architecture"), ("direction", "temporal_direction"), ("loss", "loss")):
        value = getattr(args, flag, None)
        if value is not None:
            over[key] = value
    if getattr(args, "seed", None) is not None:
        over["training.seed"] = str(args.seed)
    return cfg.with_overrides(over) if over else cfg


def _features_path(args, root: Path | None = None) -> Path:
    if args.features is not None:
        return _existing(args.features, "--features")
    if root is not None and (root / "features.bin").exists():
        return root / "features.bin"
    if root is not None and (root.parent / "features.bin").exists():
        return root.parent / "features.bin"
    raise UsageError("--features is required")


# ---------------------------------------------------------------------------
# verbs


def cmd_synth(args) -> int:
    from .synthetic import generate, save_scenario

    try:
        conf = _scenario_config(args)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    out = _out(args.out)
    scn = generate(conf)
    save_scenario(scn, out)
    print(f"wrote {len(scn.train)} train / {len(scn.test)} test videos, {len(scn.features)} feature records to {out}")
    write_manifest(out, "synth", conf.to_dict(), {"scenario": conf.seed}, {})
    return 0


def _scenario_config(args):
    from .synthetic import PRESETS, ScenarioConfig, load_scenario_config

    config = _existing(args.config, "--config") if args.config else None
    conf = PRESETS[args.preset]() if args.preset else load_scenario_config(config)
    over = _overrides(args.set)
    if args.seed is not None:
        over["seed"] = str(args.seed)
    if over:
        doc = conf.to_dict()
        for k, v in over.items():
            if k not in doc:
                raise UsageError(f"unknown scenario field {k!r}")
            try:
                doc[k] = json.loads(v)
            except json.JSONDecodeError:
                doc[k] = v
        conf = ScenarioConfig.from_dict(doc)
    return conf


def cmd_train(args) -> int:
    from .plotting import plot_loss_curve

    cfg = _pipeline_config(args)
    data = _existing(args.data, "--data")
    feats_path = _features_path(args, data)
    out = _out(args.out)
    dataset = load_dataset(data)
    features = load_features(feats_path)
    started = time.perf_counter()
    result = train(dataset, features, cfg, out_dir=out)
    plot_loss_curve(result.loss_curve, out / "loss.png")
    means = result.epoch_means()
    print(f"trained {len(dataset)} videos, {len(result.loss_curve)} steps, final epoch loss {means[-1]:.6f}")
    log.info("training took %.1fs", time.perf_counter() - started)
    write_manifest(out, "train", cfg.to_dict(), {"training": cfg.training.seed}, {"data": data, "features": feats_path})
    return 0


def cmd_predict(args) -> int:
    data = _existing(args.data, "--data")
    params_path = _existing(args.params, "--params")
    feats_path = _features_path(args, data)
    out = _out(args.out)
    params, vocab, cfg = load_trained(params_path)
    if args.set:
        cfg = cfg.with_overrides(_overrides(args.set))
    dataset = load_dataset(data)
    preds = predict(dataset, load_features(feats_path), params, vocab, cfg, top_k=args.top_k, jobs=args.jobs)
    save_clip_relations(preds, out)
    print(f"predicted {sum(len(v) for v in preds.values())} clip relations for {len(preds)} videos")
    write_manifest(out, "predict", cfg.to_dict(), {"training": cfg.training.seed}, {"data": data, "features": feats_path, "params": params_path})
    return 0


def cmd_associate(args) -> int:
    data = _existing(args.data, "--data")
    out = _out(args.out)
    acfg = AssocConfig(mode=args.mode, overlap_threshold=args.overlap)
    clip_rels = load_clip_relations(data)
    videos = {vid: associate(rels, acfg) for vid, rels in clip_rels.items()}
    save_prediction_dir(videos, out)
    print(f"associated {sum(len(v) for v in videos.values())} video relations ({args.mode})")
    write_manifest(out, "associate", {"mode": acfg.mode, "overlap_threshold": acfg.overlap_threshold}, {}, {"data": data})
    return 0


def cmd_evaluate(args) -> int:
    from .plotting import plot_metric_bars, plot_per_video_ap

    data = _existing(args.data, "--data")
    pred_dir = _existing(args.pred, "--pred")
    gts = load_dataset(data)
    preds = load_prediction_dir(pred_dir)
    report = evaluate(preds, gts, viou_thresh=args.viou)
    table = report.format_table(args.label)
    print(table)
    if args.out:
        out = _out(args.out)
        report.write_json(out / "report.json")
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
        plot_metric_bars([(args.label, report)], out / "metrics.png")
        plot_per_video_ap(report, out / "per_video_ap.png")
        write_manifest(out, "evaluate", {"viou_thresh": args.viou}, {}, {"data": data, "pred": pred_dir})
    return 0


def cmd_gradcheck(args) -> int:
    from .pipeline.verify import model_gradcheck

    archs = ARCHITECTURES if args.arch in (None, "all") else (args.arch,)
    seed = 0 if args.seed is None else args.seed
    started = time.perf_counter()
    errors = model_gradcheck(seed, archs, direction=args.direction or "forward")
    for arch, err in errors.items():
        print(f"{arch:<14s} max relative error {err:.3e}")
    worst = max(errors.values())
    print(f"max relative error {worst:.3e} ({time.perf_counter() - started:.1f}s)")
    return 0 if worst < args.tol else 2


ABLATION_GRIDS: dict[str, list[tuple[str, dict]]] = {
    "components": [
        ("Base", {"spatial_mode": "off", "temporal_mode": "off"}),
        ("Base+pos-GCN", {"spatial_mode": "pos_only", "temporal_mode": "off"}),
        ("Base+sem-GCN", {"spatial_mode": "sem_only", "temporal_mode": "off"}),
        ("Base+S-GCNs", {"temporal_mode": "off"}),
        ("Base+T-GCN", {"spatial_mode": "off"}),
        ("Base+S-GCNs+T-GCN", {}),
    ],
    "affinity": [("w/o Es,Et", {"spatial_affinity": False, "temporal_mode": "dense_unweighted"})],
    "architecture": [
        ("Parallel", {"architecture": "parallel"}),
        ("Reversed", {"architecture": "reversed"}),
        ("Pure-Object", {"architecture": "pure_object"}),
    ],
    "direction": [
        ("IN-HCM", {"temporal_direction": "backward"}),
        ("BI-HCM", {"temporal_direction": "bidirectional"}),
    ],
    "loss": [("HCM-BCE", {"loss": "bce"})],
}


def run_ablation(train_set, test_input, test_gt, features, base: PipelineConfig, grid: Sequence[str], seeds: Sequence[int], acfg: AssocConfig, jobs: int = 1, on_row=None):
    """Train and evaluate every grid row for each seed; returns (label, mean report) rows."""
    rows = []
    seen = set()
    for name in grid:
        if name not in ABLATION_GRIDS:
            raise UsageError(f"unknown ablation grid {name!r}; choose from {sorted(ABLATION_GRIDS)}")
        for label, over in ABLATION_GRIDS[name]:
            if label in seen:
                continue
            seen.add(label)
            reports = []
            for seed in seeds:
                cfg = replace(base.with_overrides(over), training=replace(base.training, seed=seed))
                res = train(train_set, features, cfg)
                clip_rels = predict(test_input, features, res.params, res.vocab, cfg, jobs=jobs)
                reports.append(evaluate({v: associate(r, acfg) for v, r in clip_rels.items()}, test_gt))
            rep = _mean_report(reports)
            rows.append((label, rep))
            if on_row is not None:
                on_row(label, rep)
    return rows


def _mean_report(reports: Sequence[EvalReport]) -> EvalReport:
    def avg(group, key):
        return float(np.mean([getattr(r, group)[key] for r in reports]))

    return EvalReport(
        reldet={k: avg("reldet", k) for k in reports[0].reldet},
        reltag={k: avg("reltag", k) for k in reports[0].reltag},
    )


def cmd_ablate(args) -> int:
    from .plotting import plot_metric_bars

    root = _existing(args.data, "--data")
    cfg = _pipeline_config(args)
    feats_path = _features_path(args, root)
    out = _out(args.out)
    train_set = load_dataset(root / "train")
    test_gt = load_dataset(root / "test")
    test_input = load_dataset(root / "test_input") if (root / "test_input").exists() else test_gt
    features = load_features(feats_path)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.training.seed]
    grid = [g.strip() for g in args.grid.split(",") if g.strip()]
    acfg = AssocConfig(mode=args.mode)
    rows = run_ablation(
        train_set, test_input, test_gt, features, cfg, grid, seeds, acfg, args.jobs,
        on_row=lambda label, rep: log.info("%s: P@1 %.4f mAP %.4f", label, rep.reltag["p1"], rep.reldet["map"]),
    )
    table = format_metric_table(rows)
    print(table)
    (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump({label: rep.to_dict() for label, rep in rows}, fh, indent=2, sort_keys=True)
    plot_metric_bars(rows, out / "ablation.png")
    write_manifest(out, "ablate", {"base": cfg.to_dict(), "grid": grid, "mode": acfg.mode}, {"training": seeds}, {"data": root, "features": feats_path})
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hcmvrd", description="Video relation detection with hierarchical spatio-temporal context graphs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    sub.required = True

    def common(sp, *flags):
        if "config" in flags:
            sp.add_argument("--config", help="JSON config file (default: built-in desk-scale config, hidden width 64)")
        if "data" in flags:
            sp.add_argument("--data", help="input directory")
        if "features" in flags:
            sp.add_argument("--features", help="VRFT feature file")
        if "params" in flags:
            sp.add_argument("--params", help="checkpoint manifest written by train")
        if "out" in flags:
            sp.add_argument("--out", help="output directory")
        if "seed" in flags:
            sp.add_argument("--seed", type=int, help="seed for all randomness")
        if "jobs" in flags:
            sp.add_argument("--jobs", type=int, default=1, help="parallel videos for prediction")
        if "model" in flags:
            sp.add_argument("--arch", choices=ARCHITECTURES)
            sp.add_argument("--direction", choices=DIRECTIONS)
            sp.add_argument("--loss", choices=LOSSES)
        if "set" in flags:
            sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override (repeatable)")

    s = sub.add_parser("synth", help="generate a synthetic scenario")
    common(s, "config", "out", "seed", "set")
    s.add_argument("--preset", choices=("default", "association", "imbalance"))

    s = sub.add_parser("train", help="train a model")
    common(s, "config", "data", "features", "out", "seed", "model", "set")

    s = sub.add_parser("predict", help="per-clip relation prediction")
    common(s, "data", "features", "params", "out", "jobs", "set")
    s.add_argument("--top-k", type=int, default=None)

    s = sub.add_parser("associate", help="link clip relations into video relations")
    common(s, "data", "out")
    s.add_argument("--mode", choices=MODES, default="greedy")
    s.add_argument("--overlap", type=float, default=0.5)

    s = sub.add_parser("evaluate", help="RelDet and RelTag metrics")
    common(s, "data", "out")
    s.add_argument("--pred", help="directory of video relation predictions")
    s.add_argument("--viou", type=float, default=0.5)
    s.add_argument("--label", default="HCM")

    s = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    common(s, "seed")
    s.add_argument("--arch", choices=ARCHITECTURES + ("all",), default="all")
    s.add_argument("--direction", choices=DIRECTIONS)
    s.add_argument("--tol", type=float, default=1e-4)

    s = sub.add_parser("ablate", help="train and evaluate a grid of variants")
    common(s, "config", "data", "features", "out", "seed", "jobs", "model", "set")
    s.add_argument("--grid", default="components", help=f"comma list of {sorted(ABLATION_GRIDS)}")
    s.add_argument("--seeds", help="comma list of training seeds (default: --seed or config seed)")
    s.add_argument("--mode", choices=MODES, default="relaxed")
    return p


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "associate": cmd_associate,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.verb](args)
    except (UsageError, ConfigError, DatasetError, FeatureFormatError) as exc:
        print(f"hcmvrd {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, OSError, RuntimeError, ValueError, KeyError) as exc:
        print(f"hcmvrd {args.verb}: failed: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
