"""Depth encoder, frozen image-proxy encoder and the class-anchor bank.

Both towers share one architecture: preprocess the depth map (near = large,
empty = 0), average-pool to a coarse grid, two Linear+ReLU layers, a linear
head and L2 normalization.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .errors import InvalidInput, ShapeError
from .numerics import ParamStore, Tensor
from .renderer import DepthMap, RenderConfig, dense_config, render
from .views import ViewSet

DEPTH_PREFIX = "depth/"
PROXY_PREFIX = "proxy/"


@dataclass(frozen=True)
class EncoderSpec:
    resolution: int = 224
    patch: int = 14  # pooled grid is patch x patch
    hidden: int = 256
    out_dim: int = 64
    layers: int = 2

    def __post_init__(self):
        if self.out_dim < 2:
            raise InvalidInput("out_dim must be >= 2")
        if self.layers < 1:
            raise InvalidInput("need at least one hidden layer")
        if self.resolution % self.patch:
            raise InvalidInput(f"resolution {self.resolution} not divisible by patch grid {self.patch}")

    @property
    def in_dim(self) -> int:
        return self.patch * self.patch


@dataclass(frozen=True, eq=False)
class AnchorBank:
    vectors: np.ndarray  # (K, C), unit rows
    class_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.vectors) < 2:
            raise InvalidInput("anchor bank needs at least two classes")
        if len(self.class_names) != len(self.vectors):
            raise InvalidInput("one class name per anchor")

    def __len__(self) -> int:
        return len(self.vectors)

    def permuted(self, perm: Sequence[int]) -> AnchorBank:
        perm = list(perm)
        return AnchorBank(self.vectors[perm], tuple(self.class_names[i] for i in perm))


def init_encoder(spec: EncoderSpec, seed: int, prefix: str = DEPTH_PREFIX, frozen: bool = False) -> ParamStore:
    """He-normal weights and zero biases from a seeded generator."""
    rng = np.random.default_rng(seed)
    store = ParamStore(frozen=False)
    widths = [spec.in_dim] + [spec.hidden] * spec.layers + [spec.out_dim]
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        store.add(f"{prefix}W{i}", rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        store.add(f"{prefix}b{i}", np.zeros(fan_out))
    store.frozen = frozen
    return store


def init_proxy(spec: EncoderSpec, seed: int) -> ParamStore:
    return init_encoder(spec, seed, PROXY_PREFIX, frozen=True)


def _prefix_of(store: ParamStore) -> str:
    for name in store.names():
        if name.endswith("W0"):
            return name[:-2]
    raise KeyError("store holds no encoder")


def preprocess(maps: Sequence[DepthMap], spec: EncoderSpec) -> np.ndarray:
    """(B, patch*patch) pooled inputs; occupied depths map to (z_max - z) / (z_max - z_min + 1e-8)."""
    out = np.empty((len(maps), spec.in_dim))
    cell = spec.resolution // spec.patch
    for i, m in enumerate(maps):
        if m.depth.shape != (spec.resolution, spec.resolution):
            raise ShapeError(f"depth map is {m.depth.shape}, encoder expects {spec.resolution}^2")
        img = np.zeros_like(m.depth)
        if m.occupied.any():
            z = m.depth[m.occupied]
            z_max, z_min = z.max(), z.min()
            img[m.occupied] = (z_max - z) / (z_max - z_min + 1e-8)
        out[i] = img.reshape(spec.patch, cell, spec.patch, cell).mean(axis=(1, 3)).reshape(-1)
    return out


def forward(inputs: np.ndarray | Tensor, store: ParamStore, spec: EncoderSpec) -> Tensor:
    """Batch of pooled inputs (B, in_dim) to unit features (B, C)."""
    prefix = _prefix_of(store)
    h = nx.as_tensor(inputs)
    for i in range(spec.layers + 1):
        h = nx.add(nx.matmul(h, store.param(f"{prefix}W{i}")), store.param(f"{prefix}b{i}"))
        if i < spec.layers:
            h = nx.relu(h)
    return nx.l2_normalize(h)


def encode_batch(maps: Sequence[DepthMap], store: ParamStore, spec: EncoderSpec) -> Tensor:
    return forward(nx.constant(preprocess(maps, spec)), store, spec)


def encode_depth(depth_map: DepthMap, store: ParamStore, spec: EncoderSpec) -> np.ndarray:
    return encode_batch([depth_map], store, spec).value[0]


def encode_image_proxy(depth_map: DepthMap, frozen: ParamStore, spec: EncoderSpec) -> np.ndarray:
    """Feature of the frozen tower; ``depth_map`` is normally a dense render."""
    if not frozen.frozen:
        raise InvalidInput("image-proxy encoder must use a frozen store")
    return encode_depth(depth_map, frozen, spec)


def features(maps: Sequence[DepthMap], store: ParamStore, spec: EncoderSpec, chunk: int = 256) -> np.ndarray:
    """Gradient-free batched encoding."""
    frozen = ParamStore(entries=store.entries, frozen=True)
    parts = [encode_batch(maps[i:i + chunk], frozen, spec).value for i in range(0, len(maps), chunk)]
    return np.concatenate(parts) if parts else np.empty((0, spec.out_dim))


def build_anchor_bank(clouds, labels: Sequence[int], class_names: Sequence[str], frozen: ParamStore,
                      views: ViewSet, spec: EncoderSpec, render_cfg: RenderConfig,
                      cache: dict | None = None) -> AnchorBank:
    """Per-class L2-normalized mean of frozen-tower features over samples and views.

    ``cache`` maps (cloud id, view index) to dense proxy features and is filled as a side effect.
    """
    labels = np.asarray(labels)
    k = len(class_names)
    dense = dense_config(render_cfg)
    sums = np.zeros((k, spec.out_dim))
    counts = np.zeros(k, dtype=np.int64)
    for cloud, label in zip(clouds, labels):
        feats = proxy_view_features(cloud, frozen, views, spec, dense, cache)
        sums[label] += feats.sum(axis=0)
        counts[label] += len(feats)
    if np.any(counts == 0):
        missing = [class_names[i] for i in np.nonzero(counts == 0)[0]]
        raise InvalidInput(f"classes without training samples: {missing}")
    means = sums / counts[:, None]
    return AnchorBank(means / np.linalg.norm(means, axis=1, keepdims=True), tuple(class_names))


def proxy_view_features(cloud, frozen: ParamStore, views: ViewSet, spec: EncoderSpec,
                        dense_cfg: RenderConfig, cache: dict | None = None) -> np.ndarray:
    """(V, C) frozen-tower features of dense renders, memoized per (cloud id, view)."""
    if cache is None:
        maps = [render(cloud, v, dense_cfg) for v in views]
        return features(maps, frozen, spec)
    missing = [i for i, v in enumerate(views) if (cloud.id, v) not in cache]
    if missing:
        feats = features([render(cloud, views[i], dense_cfg) for i in missing], frozen, spec)
        for i, f in zip(missing, feats):
            cache[(cloud.id, views[i])] = f
    return np.stack([cache[(cloud.id, v)] for v in views])
