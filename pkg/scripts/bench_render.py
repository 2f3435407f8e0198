"""Compare the splatting renderer against the per-pixel reference and across thread counts.

    python3 scripts/bench_render.py --clouds 20
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from depthclip.geometry import PointCloud, normalize
from depthclip.renderer import RenderConfig, render, render_reference, render_views
from depthclip.views import spherical_views


def timed(fn, *args) -> float:
    start = time.perf_counter()
    fn(*args)
    return time.perf_counter() - start


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clouds", type=int, default=20)
    ap.add_argument("--points", type=int, default=1024)
    ap.add_argument("--threads", default="1,2,4")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    clouds = [normalize(PointCloud(rng.standard_normal((args.points, 3)))) for _ in range(args.clouds)]
    views = spherical_views()
    n_maps = len(clouds) * len(views)

    print(f"{'rule':<9} {'R':>2} {'fast ms/map':>12} {'reference ms/map':>17}")
    for rule in ("minimum", "weighted"):
        for dilation in (1, 2, 4):
            cfg = RenderConfig(dilation=dilation, depth_rule=rule)
            fast = sum(timed(render, c, v, cfg) for c in clouds for v in views)
            ref = sum(timed(render_reference, c, v, cfg) for c in clouds[:5] for v in views)
            print(f"{rule:<9} {dilation:>2} {1e3 * fast / n_maps:>12.2f} {1e3 * ref / (5 * len(views)):>17.2f}")

    print(f"\n{'threads':>7} {'maps/s':>10}")
    for t in (int(x) for x in args.threads.split(",")):
        elapsed = sum(timed(render_views, c, views, RenderConfig(), t) for c in clouds)
        print(f"{t:>7} {n_maps / elapsed:>10.1f}")


if __name__ == "__main__":
    main()
