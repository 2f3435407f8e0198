"""Toy dataset, contrastive pre-training, zero-shot evaluation and head training."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import adapters
from . import encoders as enc
from . import losses
from . import numerics as nx
from .encoders import AnchorBank, EncoderSpec
from .errors import ConfigError, InvalidInput
from .geometry import PointCloud, farthest_point_sample, normalize
from .numerics import SGD, ParamStore
from .renderer import RenderConfig, dense_config, render, render_views
from .shapes import FAMILIES, sample_family
from .views import ViewSet, jitter_distance, orthogonal_views, spherical_views

log = logging.getLogger(__name__)

SURFACE_POINTS = 2048
CLOUD_POINTS = 1024
NOISE = 0.05


@dataclass
class ToyDataset:
    clouds: list[PointCloud]
    labels: np.ndarray
    train: np.ndarray
    test: np.ndarray
    class_names: tuple[str, ...]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, idx) -> tuple[list[PointCloud], np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        return [self.clouds[i] for i in idx], self.labels[idx]


def make_cloud(family: str, rng: np.random.Generator, sample_id: str) -> PointCloud:
    pts = sample_family(family, rng, SURFACE_POINTS)
    angle = rng.uniform(0, 2 * math.pi)
    c, s = math.cos(angle), math.sin(angle)
    pts = pts @ np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    cloud = normalize(PointCloud(pts, sample_id))
    noisy = cloud.points + rng.uniform(-NOISE, NOISE, size=cloud.points.shape)
    cloud = normalize(PointCloud(noisy, sample_id))
    return normalize(farthest_point_sample(cloud, CLOUD_POINTS))


def generate_toy_dataset(seed: int = 0, classes: int = 8, per_class: int = 250,
                         test_per_class: int | None = None) -> ToyDataset:
    """Seeded shape dataset; the last ``test_per_class`` samples of each class (default 1/5) are test."""
    if not 2 <= classes <= len(FAMILIES):
        raise InvalidInput(f"classes must be in [2, {len(FAMILIES)}]")
    test_per_class = per_class // 5 if test_per_class is None else test_per_class
    if not 1 <= test_per_class < per_class:
        raise InvalidInput("each class needs at least one train and one test sample")
    clouds, labels, train, test = [], [], [], []
    for label, family in enumerate(FAMILIES[:classes]):
        rng = np.random.default_rng([seed, label])
        for j in range(per_class):
            (test if j >= per_class - test_per_class else train).append(len(clouds))
            clouds.append(make_cloud(family, rng, f"{family}-{j:04d}"))
            labels.append(label)
    return ToyDataset(clouds, np.array(labels), np.array(train), np.array(test), FAMILIES[:classes])


# -- pre-training --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    proxy_seed: int = 1234
    loss_schedule: str = "joint"
    tau: float = losses.TAU
    max_steps: int | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("contrastive training needs batch_size >= 2")
        if self.loss_schedule not in ("joint", "alternating"):
            raise ConfigError("loss_schedule must be 'joint' or 'alternating'")
        if self.epochs < 0 or self.learning_rate < 0 or self.tau <= 0:
            raise ConfigError("epochs and learning_rate must be >= 0, tau > 0")


@dataclass
class PretrainResult:
    store: ParamStore  # depth encoder + loss balance
    proxy: ParamStore
    history: list[dict] = field(default_factory=list)


def init_depth_store(spec: EncoderSpec, seed: int) -> ParamStore:
    store = enc.init_encoder(spec, seed)
    losses.init_balance(store)
    return store


def _contrastive_step(near_maps, far_maps, image_feats, store, spec, cfg, parts):
    depth = store.subset(enc.DEPTH_PREFIX)
    batch = losses.ContrastiveBatch(enc.encode_batch(near_maps, depth, spec),
                                    enc.encode_batch(far_maps, depth, spec),
                                    nx.constant(image_feats))
    l_intra = losses.intra_loss(batch, cfg.tau)
    l_cross = losses.cross_loss(batch, cfg.tau)
    log_sigma = store.param(losses.LOG_SIGMA)
    total = losses.total_loss(l_intra, l_cross, log_sigma)
    if parts == "intra":
        objective = nx.add(nx.mul(l_intra, nx.exp(nx.scale(nx.reshape(log_sigma, ()), -2.0))),
                           nx.log(nx.add(nx.exp(nx.reshape(log_sigma, ())), 1.0)))
    elif parts == "cross":
        objective = l_cross
    else:
        objective = total
    return l_intra.item(), l_cross.item(), total.item(), objective


def pretrain(dataset: ToyDataset, views: ViewSet, cfg: TrainConfig, render_cfg: RenderConfig = RenderConfig(),
             spec: EncoderSpec = EncoderSpec(), proxy: ParamStore | None = None,
             store: ParamStore | None = None, cache: dict | None = None) -> PretrainResult:
    """One random view per sample per step; two jittered sparse renders and one dense frozen-tower render."""
    store = init_depth_store(spec, cfg.seed) if store is None else store
    proxy = enc.init_proxy(spec, cfg.proxy_seed) if proxy is None else proxy
    cache = {} if cache is None else cache
    dense = dense_config(render_cfg)
    opt = SGD(store, cfg.learning_rate, cfg.momentum)
    rng = np.random.default_rng(cfg.seed)
    train = dataset.train
    n_batches = len(train) // cfg.batch_size
    if n_batches == 0:
        raise ConfigError("training split smaller than one batch")
    history: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(train)
        for b in range(n_batches):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                return PretrainResult(store, proxy, history)
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            near, far, image = [], [], []
            for i in idx:
                cloud = dataset.clouds[i]
                view = views[int(rng.integers(len(views)))]
                v1, v2 = jitter_distance(view, rng)
                near.append(render(cloud, v1, render_cfg))
                far.append(render(cloud, v2, render_cfg))
                image.append(enc.proxy_view_features(cloud, proxy, ViewSet((view,), "custom"), spec,
                                                     dense, cache)[0])
            image = np.stack(image)
            passes = ("intra", "cross") if cfg.loss_schedule == "alternating" else ("joint",)
            record = None
            for parts in passes:
                store.zero_grad()
                l_intra, l_cross, total, objective = _contrastive_step(near, far, image, store, spec, cfg, parts)
                if record is None:
                    record = {"step": step, "L_intra": l_intra, "L_cross": l_cross,
                              "sigma": losses.sigma_of(store), "total": total}
                objective.backward()
                opt.step()
            history.append(record)
            if step % 50 == 0:
                log.info("step %d epoch %d intra %.4f cross %.4f sigma %.4f", step, epoch,
                         record["L_intra"], record["L_cross"], record["sigma"])
            step += 1
    return PretrainResult(store, proxy, history)


def pair_cosine(dataset: ToyDataset, store: ParamStore, views: ViewSet, render_cfg: RenderConfig,
                spec: EncoderSpec, indices, seed: int = 99) -> float:
    """Mean cosine between depth features of the same view at two jittered distances."""
    rng = np.random.default_rng(seed)
    near, far = [], []
    for i in indices:
        view = views[int(rng.integers(len(views)))]
        v1, v2 = jitter_distance(view, rng)
        near.append(render(dataset.clouds[i], v1, render_cfg))
        far.append(render(dataset.clouds[i], v2, render_cfg))
    depth = store.subset(enc.DEPTH_PREFIX)
    a = enc.features(near, depth, spec)
    b = enc.features(far, depth, spec)
    return float(np.mean(np.sum(a * b, axis=1)))


# -- evaluation ----------------------------------------------------------------

@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray  # rows: true class, cols: predicted
    predictions: np.ndarray

    @property
    def per_class(self) -> dict[str, list[float]]:
        tp = np.diag(self.confusion).astype(float)
        pred = self.confusion.sum(axis=0)
        true = self.confusion.sum(axis=1)
        precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
        recall = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
        return {"precision": precision.tolist(), "recall": recall.tolist()}


def score(predictions, labels, num_classes: int) -> Metrics:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    accuracy = float(np.mean(predictions == labels)) if len(labels) else 0.0
    return Metrics(accuracy, confusion, predictions)


def view_features(clouds, store: ParamStore, views: ViewSet, render_cfg: RenderConfig, spec: EncoderSpec,
                  threads: int = 1) -> np.ndarray:
    """(B, V, C) gradient-free features of sparse renders."""
    frozen = ParamStore(entries=store.entries, frozen=True)
    out = np.empty((len(clouds), len(views), spec.out_dim))
    for i, cloud in enumerate(clouds):
        out[i] = enc.features(render_views(cloud, views, render_cfg, threads), frozen, spec)
    return out


def eval_zero_shot(dataset: ToyDataset, store: ParamStore, anchors: AnchorBank, views: ViewSet | None = None,
                   render_cfg: RenderConfig = RenderConfig(), spec: EncoderSpec = EncoderSpec(),
                   indices=None, threads: int = 1) -> Metrics:
    views = orthogonal_views() if views is None else views
    indices = dataset.test if indices is None else indices
    clouds, labels = dataset.subset(indices)
    feats = view_features(clouds, store.subset(enc.DEPTH_PREFIX), views, render_cfg, spec, threads)
    logits = adapters.zero_shot_logits(feats, anchors)
    return score(np.argmax(logits, axis=1), labels, len(anchors))


def anchors_for(dataset: ToyDataset, proxy: ParamStore, views: ViewSet | None = None,
                render_cfg: RenderConfig = RenderConfig(), spec: EncoderSpec = EncoderSpec(),
                cache: dict | None = None) -> AnchorBank:
    views = spherical_views() if views is None else views
    clouds, labels = dataset.subset(dataset.train)
    return enc.build_anchor_bank(clouds, labels, dataset.class_names, proxy, views, spec, render_cfg, cache)


# -- supervised heads ----------------------------------------------------------

HEADS = ("gdpa", "single", "interview")


@dataclass(frozen=True)
class HeadConfig:
    head: str = "gdpa"
    k_shot: int | None = 16  # None trains on the full training split
    epochs: int = 40
    batch_size: int = 16
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    gate_init: float = 0.5
    gate_fixed: float | None = None
    # multiplies cosine logits inside the cross-entropy only; predictions are unaffected
    logit_scale: float = 30.0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}")
        if self.k_shot is not None and self.k_shot < 1:
            raise ConfigError("k_shot must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate < 0:
            raise ConfigError("bad head training hyperparameters")


@dataclass
class HeadResult:
    metrics: Metrics
    trajectory: list[float]  # test accuracy at init and after each epoch
    store: ParamStore

    @property
    def accuracy(self) -> float:
        return self.metrics.accuracy


def k_shot_indices(dataset: ToyDataset, k: int | None) -> np.ndarray:
    """First ``k`` training samples of every class, in sample order."""
    if k is None:
        return dataset.train.copy()
    picked = []
    for c in range(dataset.num_classes):
        members = [i for i in dataset.train if dataset.labels[i] == c]
        if k > len(members):
            raise InvalidInput(f"k_shot {k} exceeds {len(members)} training samples of class {c}")
        picked.extend(members[:k])
    return np.array(picked)


@dataclass
class HeadFeatures:
    """Frozen-encoder view features for the head's train subset and the test split."""

    train_depth: np.ndarray
    train_clip: np.ndarray
    train_labels: np.ndarray
    test_depth: np.ndarray
    test_clip: np.ndarray
    test_labels: np.ndarray


def head_features(dataset: ToyDataset, store: ParamStore, proxy: ParamStore, k_shot: int | None,
                  views: ViewSet | None = None, render_cfg: RenderConfig = RenderConfig(),
                  spec: EncoderSpec = EncoderSpec(), threads: int = 1) -> HeadFeatures:
    views = spherical_views() if views is None else views
    depth = store.subset(enc.DEPTH_PREFIX)
    tr_clouds, tr_labels = dataset.subset(k_shot_indices(dataset, k_shot))
    te_clouds, te_labels = dataset.subset(dataset.test)
    return HeadFeatures(view_features(tr_clouds, depth, views, render_cfg, spec, threads),
                        view_features(tr_clouds, proxy, views, render_cfg, spec, threads), tr_labels,
                        view_features(te_clouds, depth, views, render_cfg, spec, threads),
                        view_features(te_clouds, proxy, views, render_cfg, spec, threads), te_labels)


def init_head(cfg: HeadConfig, n_views: int, dim: int) -> ParamStore:
    if cfg.head == "gdpa":
        gate = cfg.gate_init if cfg.gate_fixed is None else cfg.gate_fixed
        return adapters.init_gdpa(n_views, dim, cfg.seed, gate)
    if cfg.head == "single":
        return adapters.init_single_path(n_views, dim, cfg.seed)
    return adapters.init_interview(n_views, dim, cfg.seed)


def head_logits(cfg: HeadConfig, store: ParamStore, depth, clip, anchors: AnchorBank):
    if cfg.head == "gdpa":
        return adapters.gdpa_logits(depth, clip, store, anchors)
    if cfg.head == "single":
        return adapters.single_path_logits(depth, store, anchors)
    return adapters.interview_logits(depth, store, anchors)


def train_head(feats: HeadFeatures, anchors: AnchorBank, cfg: HeadConfig) -> HeadResult:
    """Cross-entropy training of the head alone; encoders only enter through precomputed features."""
    n_views, dim = feats.train_depth.shape[1:]
    store = init_head(cfg, n_views, dim)
    trainable = [n for n in store.names() if not (n == adapters.GATE and cfg.gate_fixed is not None)]
    opt = SGD(store, cfg.learning_rate, cfg.momentum, only=trainable)
    rng = np.random.default_rng(cfg.seed)
    k = len(anchors)

    def evaluate() -> Metrics:
        frozen = ParamStore(entries=store.entries, frozen=True)
        logits = head_logits(cfg, frozen, feats.test_depth, feats.test_clip, anchors).value
        return score(np.argmax(logits, axis=1), feats.test_labels, k)

    trajectory = [evaluate().accuracy]
    n = len(feats.train_labels)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            store.zero_grad()
            logits = head_logits(cfg, store, feats.train_depth[idx], feats.train_clip[idx], anchors)
            losses.cross_entropy(nx.scale(logits, cfg.logit_scale), feats.train_labels[idx]).backward()
            opt.step()
        trajectory.append(evaluate().accuracy)
    return HeadResult(evaluate(), trajectory, store)
