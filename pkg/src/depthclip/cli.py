"""Command-line entry point: render, pretrain, zeroshot, fewshot, bench.

Exit codes: 0 success, 2 configuration / input errors, 3 numeric failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio
from . import encoders as enc
from . import pipeline as pl
from .config import RunConfig, load_config
from .encoders import AnchorBank
from .errors import ConfigError, FormatError, InvalidInput, NumericsError, ParseError, ShapeError
from .geometry import PointCloud, normalize
from .numerics import ParamStore
from .renderer import render_views
from .views import view_set

ANCHORS = "anchors/vectors"
log = logging.getLogger("depthclip")


def default_threads() -> int:
    env = os.environ.get("C2P_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"C2P_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="training / head seed")
    p.add_argument("--data-seed", type=int, help="toy dataset seed")
    p.add_argument("--per-class", type=int, help="samples per class in the toy dataset")
    p.add_argument("--test-per-class", type=int)
    p.add_argument("--threads", type=int, help="render workers (default: C2P_THREADS or logical cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthclip", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one cloud to PGM depth maps")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("xyz", "off"))
    p.add_argument("--views", default="orth6", choices=("orth6", "sph10"))
    p.add_argument("--rule", choices=("min", "weighted"))
    p.add_argument("--dilation", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("pretrain", help="contrastive pre-training on the toy dataset")
    _common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--schedule", choices=("joint", "alternating"))
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("zeroshot", help="zero-shot evaluation")
    _common(p)
    p.add_argument("--checkpoint", default="none", help="checkpoint path or 'none' for the untrained encoder")
    p.add_argument("--out", required=True, help="metrics JSON path")

    p = sub.add_parser("fewshot", help="train a classification head on k shots per class")
    _common(p)
    p.add_argument("--checkpoint", default="none")
    p.add_argument("--k", default=None, help="shots per class, or 'full'")
    p.add_argument("--head", choices=pl.HEADS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", required=True, help="metrics JSON path")

    p = sub.add_parser("bench", help="render throughput")
    p.add_argument("--thread-counts", default="1,2,4")
    p.add_argument("--clouds", type=int, default=20)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--views", default="sph10", choices=("orth6", "sph10"))
    p.add_argument("--config")
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    cfg = cfg.override("data", seed=getattr(args, "data_seed", None), per_class=getattr(args, "per_class", None),
                       test_per_class=getattr(args, "test_per_class", None))
    seed = getattr(args, "seed", None)
    cfg = cfg.override("train", seed=seed, epochs=getattr(args, "epochs", None) if args.command == "pretrain" else None,
                       batch_size=getattr(args, "batch_size", None), learning_rate=getattr(args, "lr", None)
                       if args.command == "pretrain" else None, loss_schedule=getattr(args, "schedule", None))
    if args.command == "fewshot":
        k = args.k
        if k is not None and k != "full":
            try:
                k = int(k)
            except ValueError:
                raise ConfigError(f"--k must be an integer or 'full', got {k!r}") from None
        cfg = cfg.override("head", seed=seed, head=args.head, epochs=args.epochs, learning_rate=args.lr)
        if k == "full":
            cfg = dataclasses.replace(cfg, head=dataclasses.replace(cfg.head, k_shot=None))
        elif k is not None:
            cfg = cfg.override("head", k_shot=k)
    return cfg


def _dataset(cfg: RunConfig) -> pl.ToyDataset:
    d = cfg.data
    try:
        return pl.generate_toy_dataset(d.seed, d.classes, d.per_class, d.test_per_class)
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from exc


def _threads(args) -> int:
    return args.threads if getattr(args, "threads", None) else default_threads()


def _load_towers(cfg: RunConfig, checkpoint: str, dataset: pl.ToyDataset, threads: int):
    """(depth store, frozen proxy, anchors) from a checkpoint, or freshly seeded for 'none'."""
    if checkpoint == "none":
        store = pl.init_depth_store(cfg.encoder, cfg.train.seed)
        proxy = enc.init_proxy(cfg.encoder, cfg.train.proxy_seed)
        anchors = None
    else:
        path = Path(checkpoint)
        if not path.exists():
            raise ConfigError(f"checkpoint {checkpoint} not found")
        full = dataio.load_checkpoint(path)
        store = full.subset(enc.DEPTH_PREFIX).merged(full.subset("balance/"))
        proxy = full.subset(enc.PROXY_PREFIX)
        proxy.frozen = True
        anchors = None
        if ANCHORS in full:
            anchors = AnchorBank(full[ANCHORS].copy(), dataset.class_names)
        if not len(store) or not len(proxy):
            raise ConfigError(f"checkpoint {checkpoint} lacks encoder weights")
    if anchors is None:
        anchors = pl.anchors_for(dataset, proxy, cfg.views.build("head"), cfg.render, cfg.encoder)
    return store, proxy, anchors


def _metrics_json(metrics: pl.Metrics, class_names, cfg: RunConfig, **extra) -> dict:
    per = metrics.per_class
    return {
        "accuracy": metrics.accuracy,
        "per_class": {name: {"precision": per["precision"][i], "recall": per["recall"][i]}
                      for i, name in enumerate(class_names)},
        "confusion": metrics.confusion.tolist(),
        "config_echo": cfg.to_dict(),
        **extra,
    }


def _print_table(metrics: pl.Metrics, class_names, title: str) -> None:
    per = metrics.per_class
    print(f"{title}: accuracy {metrics.accuracy:.4f}")
    print(f"{'class':<12} {'precision':>9} {'recall':>7}")
    for i, name in enumerate(class_names):
        print(f"{name:<12} {per['precision'][i]:>9.3f} {per['recall'][i]:>7.3f}")


def cmd_render(args) -> int:
    cfg = load_config(args.config)
    rule = {"min": "minimum", "weighted": "weighted"}.get(args.rule)
    cfg = cfg.override("render", depth_rule=rule, dilation=args.dilation, resolution=args.resolution)
    path = Path(args.input)
    if not path.exists():
        raise ConfigError(f"input {path} not found")
    cloud = normalize(dataio.load_cloud(path, args.format))
    views = view_set(args.views)
    maps = render_views(cloud, views, cfg.render, _threads(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, m in enumerate(maps):
        name = f"view_{i:02d}.pgm"
        dataio.save_depth_pgm(m, out / name)
        files.append(name)
    manifest = {
        "input": str(path),
        "points": len(cloud),
        "views": [{"file": f, "azimuth": v.azimuth, "elevation": v.elevation, "distance": v.distance,
                   "occupied": int(m.occupied.sum())} for f, v, m in zip(files, views, maps)],
        "view_set": views.kind,
        "config_echo": {"render": cfg.to_dict()["render"]},
    }
    dataio.write_json(manifest, out / "manifest.json")
    print(f"wrote {len(maps)} depth maps to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _resolve(args)
    dataset = _dataset(cfg)
    views = cfg.views.build("pretrain")
    cache: dict = {}
    proxy = enc.init_proxy(cfg.encoder, cfg.train.proxy_seed)
    result = pl.pretrain(dataset, views, cfg.train, cfg.render, cfg.encoder, proxy=proxy, cache=cache)
    anchors = pl.anchors_for(dataset, proxy, cfg.views.build("head"), cfg.render, cfg.encoder, cache)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    full = result.store.merged(ParamStore(entries=proxy.entries))
    full.add(ANCHORS, anchors.vectors)
    dataio.save_checkpoint(full, out / "checkpoint.c2pt")
    dataio.write_history_csv(result.history, out / "history.csv")
    dataio.write_json({"steps": len(result.history), "config_echo": cfg.to_dict(),
                       "final": result.history[-1] if result.history else None}, out / "run.json")
    if result.history:
        last = result.history[-1]
        print(f"{len(result.history)} steps; final L_intra {last['L_intra']:.4f} "
              f"L_cross {last['L_cross']:.4f} sigma {last['sigma']:.4f}")
    else:
        print("0 steps; checkpoint holds the initialization")
    return 0


def cmd_zeroshot(args) -> int:
    cfg = _resolve(args)
    dataset = _dataset(cfg)
    threads = _threads(args)
    store, _, anchors = _load_towers(cfg, args.checkpoint, dataset, threads)
    metrics = pl.eval_zero_shot(dataset, store, anchors, cfg.views.build("zeroshot"), cfg.render, cfg.encoder,
                                threads=threads)
    dataio.write_json(_metrics_json(metrics, dataset.class_names, cfg, checkpoint=args.checkpoint), args.out)
    _print_table(metrics, dataset.class_names, "zero-shot")
    return 0


def cmd_fewshot(args) -> int:
    cfg = _resolve(args)
    dataset = _dataset(cfg)
    threads = _threads(args)
    store, proxy, anchors = _load_towers(cfg, args.checkpoint, dataset, threads)
    try:
        feats = pl.head_features(dataset, store, proxy, cfg.head.k_shot, cfg.views.build("head"), cfg.render,
                                 cfg.encoder, threads)
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from exc
    result = pl.train_head(feats, anchors, cfg.head)
    dataio.write_json(_metrics_json(result.metrics, dataset.class_names, cfg, checkpoint=args.checkpoint,
                                    trajectory=result.trajectory), args.out)
    _print_table(result.metrics, dataset.class_names, f"{cfg.head.head} head, k={cfg.head.k_shot or 'full'}")
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    try:
        counts = [int(t) for t in args.thread_counts.split(",")]
    except ValueError:
        raise ConfigError("--thread-counts must be comma-separated integers") from None
    rng = np.random.default_rng(0)
    clouds = [normalize(PointCloud(rng.standard_normal((args.points, 3)))) for _ in range(args.clouds)]
    views = view_set(args.views)
    print(f"{'threads':>7} {'maps/s':>10} {'points/s':>12}")
    for t in counts:
        start = time.perf_counter()
        for c in clouds:
            render_views(c, views, cfg.render, t)
        elapsed = time.perf_counter() - start
        n_maps = len(clouds) * len(views)
        print(f"{t:>7} {n_maps / elapsed:>10.1f} {n_maps * args.points / elapsed:>12.0f}")
    return 0


COMMANDS = {"render": cmd_render, "pretrain": cmd_pretrain, "zeroshot": cmd_zeroshot,
            "fewshot": cmd_fewshot, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError, FormatError, InvalidInput, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
