"""Contrastive pre-training losses, the learnable loss balance and cross-entropy.

All contrastive terms use ``e(a, b) = exp(a . b / tau)``.  For anchor set
``A`` against companion set ``B`` (rows are samples), the per-sample term is

    -log( e(A_i, B_i) / (sum_k [e(A_i, A_k) + e(A_i, B_k)] - e(A_i, A_i)) )

and each loss averages both directions over the batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import InvalidInput
from .numerics import ParamStore, Tensor

TAU = 0.7
LOG_SIGMA = "balance/log_sigma"


def sim(a, b, tau: float = TAU) -> float:
    if tau <= 0:
        raise InvalidInput("tau must be positive")
    return math.exp(float(np.dot(a, b)) / tau)


def _directional(a: Tensor, b: Tensor, tau: float) -> Tensor:
    """Per-sample terms (N,) with rows of ``a`` as anchors."""
    inv_tau = 1.0 / tau
    e_aa = nx.exp(nx.scale(nx.matmul(a, nx.transpose(a)), inv_tau))
    e_ab = nx.exp(nx.scale(nx.matmul(a, nx.transpose(b)), inv_tau))
    # masking the self-similarity (rather than subtracting it) keeps N=1 exactly zero
    off_diag = nx.constant(1.0 - np.eye(a.shape[0]))
    denom = nx.add(nx.sum(nx.mul(e_aa, off_diag), axis=1), nx.sum(e_ab, axis=1))
    return nx.sub(nx.log(denom), nx.log(nx.diag(e_ab)))


def pair_loss(a: Tensor, b: Tensor, tau: float = TAU) -> Tensor:
    """Symmetric loss averaged over both directions and the batch."""
    if a.shape != b.shape or a.value.ndim != 2:
        raise InvalidInput(f"feature batches must be matching (N, C), got {a.shape} and {b.shape}")
    n = a.shape[0]
    both = nx.add(nx.sum(_directional(a, b, tau)), nx.sum(_directional(b, a, tau)))
    return nx.scale(both, 1.0 / (2 * n))


@dataclass
class ContrastiveBatch:
    """Depth features at the two jittered distances and the frozen-tower features, all (N, C)."""

    near: Tensor
    far: Tensor
    image: Tensor

    @property
    def depth_mean(self) -> Tensor:
        # plain average of the pair; deliberately not re-normalized
        return nx.scale(nx.add(self.near, self.far), 0.5)

    def __len__(self) -> int:
        return self.near.shape[0]


def intra_loss(batch: ContrastiveBatch, tau: float = TAU) -> Tensor:
    return pair_loss(batch.near, batch.far, tau)


def cross_loss(batch: ContrastiveBatch, tau: float = TAU) -> Tensor:
    return pair_loss(batch.depth_mean, batch.image, tau)


def init_balance(store: ParamStore, sigma: float = 1.0) -> None:
    store.add(LOG_SIGMA, np.array([math.log(sigma)]))


def sigma_of(store: ParamStore) -> float:
    return float(np.exp(store[LOG_SIGMA][0]))


def total_loss(l_intra: Tensor, l_cross: Tensor, log_sigma: Tensor) -> Tensor:
    """intra / sigma^2 + cross + log(sigma + 1), with sigma = exp(log_sigma)."""
    log_sigma = nx.reshape(log_sigma, ())
    inv_sq = nx.exp(nx.scale(log_sigma, -2.0))
    reg = nx.log(nx.add(nx.exp(log_sigma), 1.0))
    return nx.add(nx.add(nx.mul(l_intra, inv_sq), l_cross), reg)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label]; accepts (K,) with an int or (B, K) with B labels."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    logits2 = logits if logits.value.ndim == 2 else nx.reshape(logits, (1, -1))
    k = logits2.shape[1]
    if len(labels) != logits2.shape[0]:
        raise InvalidInput("one label per logits row")
    if np.any(labels < 0) or np.any(labels >= k):
        raise InvalidInput(f"label out of range for {k} classes")
    logp = nx.log_softmax(logits2)
    picked = nx.take(nx.reshape(logp, (-1,)), np.arange(len(labels)) * k + labels)
    return nx.scale(nx.sum(picked), -1.0 / len(labels))
