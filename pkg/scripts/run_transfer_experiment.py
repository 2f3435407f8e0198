"""Pre-train on the seeded toy dataset, then report zero-shot and 16-shot head accuracies.

    python3 scripts/run_transfer_experiment.py --out runs/transfer

Writes history.csv and summary.json into --out. Takes a few minutes on one core.
"""
from __future__ import annotations

import argparse
import logging
import time
from pathlib import Path

from depthclip import dataio
from depthclip import encoders as enc
from depthclip import pipeline as pl
from depthclip.encoders import EncoderSpec
from depthclip.renderer import RenderConfig
from depthclip.views import spherical_views


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/transfer")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--schedule", default="joint", choices=("joint", "alternating"))
    ap.add_argument("--shots", type=int, default=16)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec, render_cfg, views = EncoderSpec(), RenderConfig(), spherical_views()
    t0 = time.perf_counter()
    ds = pl.generate_toy_dataset(seed=args.data_seed)
    cfg = pl.TrainConfig(epochs=args.epochs, seed=args.seed, loss_schedule=args.schedule)
    proxy = enc.init_proxy(spec, cfg.proxy_seed)
    cache: dict = {}
    anchors = pl.anchors_for(ds, proxy, views, render_cfg, spec, cache)

    untrained = pl.init_depth_store(spec, cfg.seed)
    summary = {"zero_shot_untrained": pl.eval_zero_shot(ds, untrained, anchors).accuracy,
               "pair_cosine_untrained": pl.pair_cosine(ds, untrained, views, render_cfg, spec, ds.test)}
    result = pl.pretrain(ds, views, cfg, render_cfg, spec, proxy=proxy, cache=cache)
    dataio.write_history_csv(result.history, out / "history.csv")
    summary["zero_shot_pretrained"] = pl.eval_zero_shot(ds, result.store, anchors).accuracy
    summary["pair_cosine_pretrained"] = pl.pair_cosine(ds, result.store, views, render_cfg, spec, ds.test)

    feats = pl.head_features(ds, result.store, proxy, args.shots)
    for head in pl.HEADS:
        res = pl.train_head(feats, anchors, pl.HeadConfig(head=head, k_shot=args.shots, seed=args.seed))
        summary[f"{head}_{args.shots}shot"] = res.accuracy
    summary["seconds"] = time.perf_counter() - t0
    dataio.write_json(summary, out / "summary.json")
    for k, v in summary.items():
        print(f"{k:<28} {v:.4f}")


if __name__ == "__main__":
    main()
