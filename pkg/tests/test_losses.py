import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthclip import numerics as nx
from depthclip.errors import InvalidInput
from depthclip.losses import (ContrastiveBatch, cross_entropy, cross_loss, intra_loss, sim, total_loss)
from depthclip.numerics import ParamStore, grad_check


def unit_rows(rng, n, c):
    x = rng.standard_normal((n, c))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def e(a, b, tau):
    return math.exp(sum(x * y for x, y in zip(a, b)) / tau)


def oracle_term(anchor, partner, tau):
    """-log e(A_i, B_i) / (sum_k e(A_i, A_k) + e(A_i, B_k) - e(A_i, A_i)), all terms explicit."""
    out = []
    for i in range(len(anchor)):
        s = sum(e(anchor[i], anchor[k], tau) + e(anchor[i], partner[k], tau) for k in range(len(anchor)))
        out.append(-math.log(e(anchor[i], partner[i], tau) / (s - e(anchor[i], anchor[i], tau))))
    return out


def oracle_pair(a, b, tau):
    n = len(a)
    return (sum(oracle_term(a, b, tau)) + sum(oracle_term(b, a, tau))) / (2 * n)


def batch(near, far, image):
    return ContrastiveBatch(nx.constant(near), nx.constant(far), nx.constant(image))


def test_sim_values():
    u = np.array([0.6, 0.8])
    assert sim(u, u, 0.7) == pytest.approx(4.172734, abs=1e-6)
    assert sim(u, u, 0.7) == math.exp(1 / 0.7)
    assert sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
    v = np.array([0.0, 1.0])
    assert sim(u, v) == sim(v, u)
    with pytest.raises(InvalidInput):
        sim(u, v, 0.0)


def test_batch_of_one_is_exactly_zero(rng):
    f = unit_rows(rng, 3, 8)
    b = batch(f[:1], f[1:2], f[2:3])
    assert intra_loss(b).item() == 0.0
    assert cross_loss(b).item() == 0.0


@pytest.mark.parametrize("tau", [0.1, 0.7, 2.0])
def test_identical_pair_gives_ln3(rng, tau):
    f = np.tile(unit_rows(rng, 1, 8), (2, 1))
    b = batch(f, f, f)
    assert abs(intra_loss(b, tau).item() - math.log(3)) < 1e-9
    assert abs(cross_loss(b, tau).item() - math.log(3)) < 1e-9


@pytest.mark.parametrize("n", [2, 4, 8])
@pytest.mark.parametrize("tau", [0.3, 0.7])
def test_match_explicit_summation(rng, n, tau):
    near, far, image = unit_rows(rng, n, 6), unit_rows(rng, n, 6), unit_rows(rng, n, 6)
    b = batch(near, far, image)
    mean = (near + far) / 2
    assert abs(intra_loss(b, tau).item() - oracle_pair(near, far, tau)) < 1e-10
    assert abs(cross_loss(b, tau).item() - oracle_pair(mean, image, tau)) < 1e-10


@given(st.integers(0, 10**6), st.integers(2, 9))
def test_nonnegative_and_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    near, far, image = unit_rows(rng, n, 5), unit_rows(rng, n, 5), unit_rows(rng, n, 5)
    perm = rng.permutation(n)
    b, bp = batch(near, far, image), batch(near[perm], far[perm], image[perm])
    for loss in (intra_loss, cross_loss):
        assert loss(b).item() >= 0
        assert loss(b).item() == pytest.approx(loss(bp).item(), abs=1e-12)


def test_intra_ignores_image_features(rng):
    near, far = nx.variable(unit_rows(rng, 4, 5)), nx.variable(unit_rows(rng, 4, 5))
    image = nx.variable(unit_rows(rng, 4, 5))
    nx.add(intra_loss(ContrastiveBatch(near, far, image)), 0.0).backward()
    assert image.grad is None
    assert near.grad is not None and np.any(near.grad)


def test_depth_mean_not_renormalized(rng):
    near, far = unit_rows(rng, 3, 4), unit_rows(rng, 3, 4)
    np.testing.assert_allclose(batch(near, far, far).depth_mean.value, (near + far) / 2)


def test_total_loss_substitution():
    li, lc = nx.constant(0.4), nx.constant(1.3)
    assert total_loss(li, lc, nx.constant([0.0])).item() == pytest.approx(0.4 + 1.3 + math.log(2), abs=1e-15)
    zero = nx.constant(0.0)
    assert total_loss(zero, zero, nx.constant([0.0])).item() == pytest.approx(0.693147, abs=1e-6)
    ls = math.log(1.7)
    expected = 0.4 / 1.7**2 + 1.3 + math.log(2.7)
    assert total_loss(li, lc, nx.constant([ls])).item() == pytest.approx(expected, rel=1e-14)


def test_total_loss_sigma_derivative():
    store = ParamStore()
    store.add("log_sigma", [0.0])
    total_loss(nx.constant(1.0), nx.constant(0.0), store.param("log_sigma")).backward()
    # d/dlog(sigma) = sigma * d/dsigma and sigma = 1
    assert store.entries["log_sigma"].grads[0] == pytest.approx(-1.5, abs=1e-12)

    def f(sigma):
        return 1.0 / sigma**2 + 0.0 + math.log(sigma + 1)

    h = 1e-6
    assert (f(1 + h) - f(1 - h)) / (2 * h) == pytest.approx(-1.5, abs=1e-6)


def test_total_loss_grad_check(rng):
    store = ParamStore()
    store.add("near", unit_rows(rng, 4, 3))
    store.add("far", unit_rows(rng, 4, 3))
    store.add("log_sigma", [0.3])
    image = unit_rows(rng, 4, 3)

    def fn():
        b = ContrastiveBatch(store.param("near"), store.param("far"), nx.constant(image))
        return total_loss(intra_loss(b), cross_loss(b), store.param("log_sigma"))

    assert grad_check(fn, store) < 1e-6


def test_cross_entropy_values():
    assert cross_entropy(nx.constant([0.3] * 4), 2).item() == pytest.approx(math.log(4), abs=1e-15)
    expected = math.log(1 + 2 * math.exp(-10))
    assert cross_entropy(nx.constant([10.0, 0.0, 0.0]), 0).item() == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(9.08e-5, rel=1e-3)


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=6), st.floats(-50, 50))
def test_cross_entropy_shift_invariant(logits, shift):
    a = cross_entropy(nx.constant(logits), 0).item()
    b = cross_entropy(nx.constant(np.array(logits) + shift), 0).item()
    assert abs(a - b) < 1e-12 * max(1.0, abs(a)) + 1e-12


def test_cross_entropy_label_range():
    with pytest.raises(InvalidInput):
        cross_entropy(nx.constant([1.0, 2.0]), 2)
    with pytest.raises(InvalidInput):
        cross_entropy(nx.constant([1.0, 2.0]), -1)


def test_cross_entropy_batch_mean():
    logits = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]])
    rows = [cross_entropy(nx.constant(r), l).item() for r, l in zip(logits, [1, 2])]
    assert cross_entropy(nx.constant(logits), [1, 2]).item() == pytest.approx(np.mean(rows), rel=1e-14)
