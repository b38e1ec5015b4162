"""Command-line entry points: train, eval, predict, benchmark, ablate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from .benchmark import assert_no_merge_stage, run_benchmark
from .checkpoint import load_weights
from .config import ConfigError, RunConfig, apply_overrides, dump_config, load_config
from .data import SyntheticDataset, load_coco_panoptic, write_panoptic_png
from .fusion import render_overlay
from .metrics import format_report
from .model import PanopticNet
from .pipeline import PanopticPredictor
from .structures import ClassCatalog
from .train import seed_all, train_loop

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _parse_resolution(text: str) -> tuple[int, int]:
    parts = text.lower().replace(",", "x").split("x")
    try:
        if len(parts) == 1:
            size = int(parts[0])
            return size, size
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise UsageError(f"cannot parse resolution {text!r}; expected HxW")


def _resolve_config(args) -> RunConfig:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out_dir"] = args.out
    for flag in ("shuffle", "hard_masks", "oracle_detector"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = str(value)
    if getattr(args, "n_att", None) is not None:
        overrides["model.n_att"] = str(args.n_att)
    if getattr(args, "c_att", None) is not None:
        overrides["model.c_att"] = str(args.c_att)
    if getattr(args, "match_by", None) is not None:
        overrides["match_by"] = args.match_by

    if args.config is not None:
        if not Path(args.config).exists():
            raise UsageError(f"config file {args.config} does not exist")
        return load_config(args.config, overrides)
    return apply_overrides(RunConfig(), overrides)


def _build_datasets(config: RunConfig, need_train: bool = True):
    """Returns (train_dataset, val_dataset, catalog); validates paths first."""
    data = config.data
    if data.kind == "synthetic":
        train_ds = SyntheticDataset(data, "train", seed=data.seed)
        val_ds = SyntheticDataset(data, "val", seed=data.seed)
        catalog = train_ds.catalog
    else:
        for path in ([data.coco_json, data.coco_png_dir] if need_train else []) + \
                [data.coco_val_json, data.coco_val_png_dir]:
            if not path or not Path(path).exists():
                raise ConfigError(f"dataset path {path!r} does not exist")
        catalog, val_iter = load_coco_panoptic(data.coco_val_json, data.coco_val_png_dir)
        val_ds = list(val_iter)
        train_ds = []
        if need_train:
            _, train_iter = load_coco_panoptic(data.coco_json, data.coco_png_dir)
            train_ds = list(train_iter)
    if config.model.n_things != catalog.n_things or config.model.n_stuff != catalog.n_stuff:
        raise ConfigError(
            f"model is configured for {config.model.n_things} things / "
            f"{config.model.n_stuff} stuff classes but the dataset has "
            f"{catalog.n_things} / {catalog.n_stuff}; set model.n_things and model.n_stuff")
    return train_ds, val_ds, catalog


def _prepare_out_dir(config: RunConfig) -> Path:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(dump_config(config))
    return out_dir


def _class_names(catalog: ClassCatalog) -> dict[int, str]:
    return {i: catalog.name(i) for i in range(catalog.n_classes)}


def _load_net(config: RunConfig, checkpoint: str | None) -> PanopticNet:
    seed_all(config.seed)
    net = PanopticNet(config.model)
    if checkpoint is not None:
        if not Path(checkpoint).exists():
            raise UsageError(f"checkpoint {checkpoint} does not exist")
        load_weights(net, checkpoint)
    return net


def cmd_train(args) -> int:
    config = _resolve_config(args)
    train_ds, val_ds, catalog = _build_datasets(config)
    out_dir = _prepare_out_dir(config)
    net = _load_net(config, args.checkpoint)
    report, ckpt = train_loop(net, train_ds, val_ds, config, out_dir)
    report.save(out_dir / "pq_report.json")
    (out_dir / "pq_report.txt").write_text(format_report(report, _class_names(catalog)) + "\n")
    logger.info("training done: checkpoint %s, final PQ %.4f", ckpt, report.pq)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import evaluate

    config = _resolve_config(args)
    if args.checkpoint is None:
        raise UsageError("eval requires --checkpoint")
    _, val_ds, catalog = _build_datasets(config, need_train=False)
    net = _load_net(config, args.checkpoint)
    out_dir = _prepare_out_dir(config)
    report = evaluate(net, val_ds, config, max_samples=args.max_samples)
    report.save(out_dir / "pq_report.json")
    table = format_report(report, _class_names(catalog))
    (out_dir / "pq_report.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_predict(args) -> int:
    config = _resolve_config(args)
    if args.checkpoint is None:
        raise UsageError("predict requires --checkpoint")
    if not args.images:
        raise UsageError("predict requires at least one image path")
    for path in args.images:
        if not Path(path).exists():
            raise UsageError(f"image {path} does not exist")
    if config.oracle_detector:
        logger.warning("predict has no ground truth; using the learned detector")
        config = apply_overrides(config, {"oracle_detector": "false"})
    net = _load_net(config, args.checkpoint)
    out_dir = _prepare_out_dir(config)
    predictor = PanopticPredictor(net, config)

    for path in args.images:
        image = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
        start = time.perf_counter()
        ctx = predictor.run(image)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        panoptic = ctx["panoptic"]
        stem = Path(path).stem
        segments_info = write_panoptic_png(panoptic, out_dir / f"{stem}_panoptic.png")
        (out_dir / f"{stem}_segments.json").write_text(json.dumps(segments_info))
        render_overlay(image, panoptic, out_dir / f"{stem}_overlay.png")
        if args.dump_masks:
            masks = ctx["stack"].masks
            scale = 255.0 / max(config.model.c_att, 1e-6)
            for slot in ctx["stack"].non_empty_slots():
                gray = np.clip(masks[slot] * scale, 0, 255).astype(np.uint8)
                Image.fromarray(gray).save(out_dir / f"{stem}_mask_{slot:02d}.png")
        logger.info("%s: %d segments, %.1f ms", path, len(segments_info), elapsed_ms)
        print(f"{path}: {elapsed_ms:.1f} ms")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    config = _resolve_config(args)
    resolution = _parse_resolution(args.resolution)
    net = _load_net(config, args.checkpoint)
    if args.checkpoint is None:
        logger.warning("benchmarking randomly initialized weights")
    out_dir = _prepare_out_dir(config)
    predictor = PanopticPredictor(net, config)
    assert_no_merge_stage(predictor)
    report = run_benchmark(predictor, config, resolution, args.iterations, args.warmup)
    (out_dir / "benchmark.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"resolution {resolution[0]}x{resolution[1]}: "
          f"inference {report['inference_ms_mean']:.1f} +- {report['inference_ms_std']:.1f} ms, "
          f"merging {report['merging_ms']}, total {report['total_ms_mean']:.1f} ms")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _resolve_config(args)
    out_dir = _prepare_out_dir(config)
    variants = args.variant or [""]
    rows = []
    for i, variant in enumerate(variants):
        overrides: dict[str, str] = {}
        label_parts = []
        if variant:
            for pair in variant.split(","):
                if "=" not in pair:
                    raise UsageError(f"--variant expects key=value pairs, got {pair!r}")
                key, value = pair.split("=", 1)
                overrides[key.strip()] = value.strip()
                label_parts.append(pair.strip())
        label = ",".join(label_parts) or "defaults"
        run_config = apply_overrides(config, overrides)
        run_config = apply_overrides(run_config, {"out_dir": str(out_dir / f"variant_{i}")})
        train_ds, val_ds, _ = _build_datasets(run_config)
        seed_all(run_config.seed)
        net = PanopticNet(run_config.model)
        variant_dir = _prepare_out_dir(run_config)
        report, _ = train_loop(net, train_ds, val_ds, run_config, variant_dir)
        rows.append({"variant": label, "pq": report.pq, "pq_things": report.pq_things,
                     "pq_stuff": report.pq_stuff})
        logger.info("variant %s: PQ %.4f", label, report.pq)

    lines = [f"{'variant':<40}|{'PQ':>8} |{'PQ_Th':>8} |{'PQ_St':>8}", "-" * 70]
    for row in rows:
        lines.append(f"{row['variant']:<40}|{row['pq']:>8.3f} |{row['pq_things']:>8.3f} "
                     f"|{row['pq_stuff']:>8.3f}")
    table = "\n".join(lines)
    (out_dir / "ablation.txt").write_text(table + "\n")
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    print(table)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="panseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="plain-text config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint")
        shuffle = p.add_mutually_exclusive_group()
        shuffle.add_argument("--shuffle", dest="shuffle", action="store_true", default=None)
        shuffle.add_argument("--no-shuffle", dest="shuffle", action="store_false")
        masks = p.add_mutually_exclusive_group()
        masks.add_argument("--hard-masks", dest="hard_masks", action="store_true", default=None)
        masks.add_argument("--soft-masks", dest="hard_masks", action="store_false")
        det = p.add_mutually_exclusive_group()
        det.add_argument("--oracle-detector", dest="oracle_detector",
                         action="store_true", default=None)
        det.add_argument("--learned-detector", dest="oracle_detector", action="store_false")
        p.add_argument("--n-att", type=int)
        p.add_argument("--c-att", type=float)
        p.add_argument("--match-by", choices=("box", "mask"))

    p_train = sub.add_parser("train", help="train a model")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p_eval)
    p_eval.add_argument("--max-samples", type=int, default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="predict panoptic maps for images")
    add_common(p_pred)
    p_pred.add_argument("images", nargs="*")
    p_pred.add_argument("--dump-masks", action="store_true",
                        help="also write attention masks as grayscale PNGs")
    p_pred.set_defaults(func=cmd_predict)

    p_bench = sub.add_parser("benchmark", help="measure inference latency")
    add_common(p_bench)
    p_bench.add_argument("--resolution", default="128x128")
    p_bench.add_argument("--iterations", type=int, default=20)
    p_bench.add_argument("--warmup", type=int, default=10)
    p_bench.set_defaults(func=cmd_benchmark)

    p_abl = sub.add_parser("ablate", help="train/evaluate a matrix of config variants")
    add_common(p_abl)
    p_abl.add_argument("--variant", action="append", metavar="KEY=VALUE[,KEY=VALUE...]",
                       help="one table row per flag occurrence")
    p_abl.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.exception("command failed")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
