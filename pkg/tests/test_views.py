import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthclip.errors import InvalidInput
from depthclip.views import (CameraView, ViewSet, jitter_distance, orthogonal_views, spherical_views)


def test_orthogonal_six_unit_distance():
    vs = orthogonal_views()
    assert len(vs) == 6 and vs.kind == "orthogonal6"
    assert all(v.distance == 1 for v in vs)


def test_front_view_looks_down_negative_z():
    np.testing.assert_allclose(orthogonal_views()[0].direction(), [0, 0, -1], atol=1e-15)


def test_orthogonal_directions_pairwise():
    dirs = [v.direction() for v in orthogonal_views()]
    for a, b in itertools.combinations(dirs, 2):
        dot = float(a @ b)
        assert min(abs(dot), abs(dot + 1)) < 1e-12


def test_spherical_ten_extends_orthogonal():
    sph = spherical_views()
    assert len(sph) == 10 and sph.kind == "spherical10"
    assert sph.views[:6] == orthogonal_views().views
    assert all(v.distance == 1 for v in sph)
    assert [v.azimuth for v in sph.views[6:]] == pytest.approx([math.pi / 4, 3 * math.pi / 4,
                                                                -3 * math.pi / 4, -math.pi / 4])
    assert all(v.elevation == pytest.approx(math.pi / 6) for v in sph.views[6:])


def test_viewset_size_enforced():
    with pytest.raises(InvalidInput):
        ViewSet(orthogonal_views().views[:5], "orthogonal6")


@pytest.mark.parametrize("kwargs", [dict(distance=0.0), dict(elevation=2.0)])
def test_camera_view_invariants(kwargs):
    args = dict(azimuth=0.0, elevation=0.0, distance=1.0) | kwargs
    with pytest.raises(InvalidInput):
        CameraView(**args)


@given(st.integers(0, 2**32 - 1), st.sampled_from(spherical_views().views))
def test_jitter_keeps_angles_and_range(seed, view):
    a, b = jitter_distance(view, np.random.default_rng(seed))
    for out in (a, b):
        assert (out.azimuth, out.elevation) == (view.azimuth, view.elevation)
        assert 0.9 <= out.distance < 1.1


def test_jitter_deterministic_and_two_draws():
    view = orthogonal_views()[2]
    first = jitter_distance(view, np.random.default_rng(42))
    assert first == jitter_distance(view, np.random.default_rng(42))
    rng = np.random.default_rng(42)
    jitter_distance(view, rng)
    ref = np.random.default_rng(42)
    ref.random(2)
    assert rng.random() == ref.random()


def test_jitter_never_hits_upper_bound():
    class Top:
        def random(self):
            return math.nextafter(1.0, 0.0)

    a, b = jitter_distance(orthogonal_views()[0], Top())
    assert a.distance < 1.1 and b.distance < 1.1


def test_viewset_toml_round_trip():
    vs = spherical_views()
    assert ViewSet.from_toml(vs.to_toml()) == vs


def test_toml_round_trip_with_numpy_scalars():
    v = CameraView(np.float64(0.5), np.float64(0.1), np.float64(1.0))
    vs = ViewSet((v,), "custom")
    assert ViewSet.from_toml(vs.to_toml()) == vs
