"""Classification heads over multi-view features.

* zero-shot: mean over views of cosine logits against the anchor bank;
* global-view aggregator ``g = f2(ReLU(f1(concat(views))))``;
* gated dual-path head: ``G = gate * g_clip(F^C) + g_depth(F^D)``, logits ``cos(G, anchor_k)``;
* single-path head: the depth path alone;
* inter-view adapter baseline with residual per-view features and weights ``alpha_v``.

Feature inputs are arrays shaped (B, N, C) or (N, C) for a single sample.
"""
from __future__ import annotations

import numpy as np

from . import numerics as nx
from .encoders import AnchorBank
from .errors import InvalidInput, ShapeError
from .numerics import ParamStore, Tensor

DEPTH_PATH = "depth_path/"
CLIP_PATH = "clip_path/"
GATE = "gate"
INTERVIEW = "interview/"


def _batched(feats) -> tuple[Tensor, bool]:
    t = nx.as_tensor(feats)
    if t.value.ndim == 2:
        return nx.reshape(t, (1,) + t.shape), True
    if t.value.ndim != 3:
        raise ShapeError(f"view features must be (B, N, C) or (N, C), got {t.shape}")
    return t, False


def _unbatch(t: Tensor, single: bool) -> Tensor:
    return nx.reshape(t, t.shape[1:]) if single else t


def _anchors(anchors: AnchorBank) -> Tensor:
    if len(anchors.vectors) == 0:
        raise InvalidInput("no classes")
    return nx.constant(anchors.vectors)


def zero_shot_logits(view_feats, anchors: AnchorBank) -> np.ndarray:
    """Mean over views of cos(F_v, anchor_k); shape (K,) or (B, K)."""
    if len(anchors.vectors) == 0:
        raise InvalidInput("no classes")
    f = np.asarray(view_feats, dtype=np.float64)
    if f.ndim not in (2, 3) or f.shape[-2] == 0:
        raise ShapeError(f"expected (N, C) or (B, N, C) view features, got {f.shape}")
    f = f / np.linalg.norm(f, axis=-1, keepdims=True)
    t = anchors.vectors / np.linalg.norm(anchors.vectors, axis=-1, keepdims=True)
    return (f @ t.T).mean(axis=-2)


def probabilities(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def init_aggregator(store: ParamStore, prefix: str, n_views: int, dim: int, seed: int,
                    hidden: int | None = None, noise: float = 0.01, shift: float = 1.0) -> None:
    """Aggregator initialised near the view mean.

    ``f1`` averages the views and adds ``shift`` so the ReLU passes everything through for
    unit-norm inputs; ``f2`` removes the shift.  Gaussian ``noise`` breaks symmetry.
    """
    hidden = dim if hidden is None else hidden
    rng = np.random.default_rng(seed)
    avg = np.zeros((n_views * dim, hidden))
    for v in range(n_views):
        avg[v * dim:(v + 1) * dim, :min(dim, hidden)] = np.eye(dim, min(dim, hidden)) / n_views
    back = np.eye(hidden, dim)
    store.add(f"{prefix}f1.W", avg + noise * rng.standard_normal(avg.shape))
    store.add(f"{prefix}f1.b", np.full(hidden, shift))
    store.add(f"{prefix}f2.W", back + noise * rng.standard_normal(back.shape))
    store.add(f"{prefix}f2.b", -shift * back.sum(axis=0))


def global_aggregate(view_feats, store: ParamStore, prefix: str = DEPTH_PATH) -> Tensor:
    """f2(ReLU(f1(concat over views))); output is not normalized."""
    x, single = _batched(view_feats)
    b, n, c = x.shape
    w1 = store.param(f"{prefix}f1.W")
    if w1.shape[0] != n * c:
        raise ShapeError(f"aggregator expects {w1.shape[0]} concatenated inputs, got {n} views x {c}")
    flat = nx.reshape(x, (b, n * c))  # row-major: view 0 features first
    h = nx.relu(nx.add(nx.matmul(flat, w1), store.param(f"{prefix}f1.b")))
    g = nx.add(nx.matmul(h, store.param(f"{prefix}f2.W")), store.param(f"{prefix}f2.b"))
    return _unbatch(g, single)


def init_single_path(n_views: int, dim: int, seed: int) -> ParamStore:
    store = ParamStore()
    init_aggregator(store, DEPTH_PATH, n_views, dim, seed)
    return store


def init_gdpa(n_views: int, dim: int, seed: int, gate: float = 0.5) -> ParamStore:
    """Depth path shares its initialisation with :func:`init_single_path` for the same seed."""
    store = init_single_path(n_views, dim, seed)
    init_aggregator(store, CLIP_PATH, n_views, dim, seed + 1)
    store.add(GATE, np.array([gate]))
    return store


def single_path_logits(depth_feats, store: ParamStore, anchors: AnchorBank) -> Tensor:
    g = global_aggregate(depth_feats, store, DEPTH_PATH)
    return _cos_logits(g, anchors)


def gdpa_logits(depth_feats, clip_feats, store: ParamStore, anchors: AnchorBank) -> Tensor:
    d = nx.as_tensor(depth_feats)
    c = nx.as_tensor(clip_feats)
    if d.shape != c.shape:
        raise ShapeError(f"depth path {d.shape} and clip path {c.shape} differ")
    g_depth = global_aggregate(d, store, DEPTH_PATH)
    g_clip = global_aggregate(c, store, CLIP_PATH)
    fused = nx.add(nx.mul(g_clip, store.param(GATE)), g_depth)
    return _cos_logits(fused, anchors)


def _cos_logits(g: Tensor, anchors: AnchorBank) -> Tensor:
    if g.value.ndim == 1:
        return nx.reshape(nx.cosine_matrix(nx.reshape(g, (1, -1)), _anchors(anchors)), (-1,))
    return nx.cosine_matrix(g, _anchors(anchors))


def init_interview(n_views: int, dim: int, seed: int, noise: float = 0.01) -> ParamStore:
    store = ParamStore()
    init_aggregator(store, INTERVIEW, n_views, dim, seed)
    rng = np.random.default_rng(seed + 2)
    for v in range(n_views):
        store.add(f"{INTERVIEW}W{v}", noise * rng.standard_normal((dim, dim)))
    return store


def interview_logits(depth_feats, store: ParamStore, anchors: AnchorBank, alpha=None) -> Tensor:
    """sum_v alpha_v cos(F_v + ReLU(G W_v^T), anchor_k) with G the aggregated global feature."""
    x, single = _batched(depth_feats)
    b, n, c = x.shape
    alpha = np.full(n, 1.0 / n) if alpha is None else np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (n,):
        raise ShapeError(f"need one alpha per view ({n}), got {alpha.shape}")
    if f"{INTERVIEW}W{n - 1}" not in store or f"{INTERVIEW}W{n}" in store:
        raise ShapeError(f"inter-view adapter is not built for {n} views")
    g = global_aggregate(x, store, INTERVIEW)
    anchors_t = _anchors(anchors)
    logits = None
    for v in range(n):
        f_v = nx.reshape(nx.take(x, [v], axis=1), (b, c))
        adapted = nx.relu(nx.matmul(g, nx.transpose(store.param(f"{INTERVIEW}W{v}"))))
        term = nx.scale(nx.cosine_matrix(nx.add(f_v, adapted), anchors_t), alpha[v])
        logits = term if logits is None else nx.add(logits, term)
    return _unbatch(logits, single)
