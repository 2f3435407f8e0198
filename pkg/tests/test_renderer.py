import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthclip.errors import InvalidInput
from depthclip.geometry import PointCloud
from depthclip.renderer import (DepthMap, RenderConfig, matching_set, project_point, render, render_reference,
                                render_views, splat_offsets, to_camera)
from depthclip.views import CameraView, orthogonal_views, spherical_views

from conftest import random_cloud


def test_project_optical_axis_to_center():
    assert project_point((0, 0, 1), RenderConfig(focal=37.0)) == (112, 112)


def test_project_direct_formula():
    assert project_point((0.5, 0.5, 1.0), RenderConfig(focal=1.0)) == (113, 113)


@pytest.mark.parametrize("z", [0.0, -0.5])
def test_project_behind_camera(z):
    assert project_point((0, 0, z), RenderConfig()) is None


def test_matching_set_single_pixel_r1():
    cfg = RenderConfig(resolution=16, focal=1.0)
    cam = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 0.0, -1.0]])  # pixels (8,8), (9,8), behind
    np.testing.assert_array_equal(matching_set(cam, (8, 8), 1, cfg), [0])
    np.testing.assert_array_equal(matching_set(cam, (9, 8), 1, cfg), [1])


def test_matching_set_r2_block():
    cfg = RenderConfig(resolution=16, focal=1.0)
    cam = np.array([[-3.0, -3.0, 1.0]])  # projects to (5, 5)
    assert project_point(cam[0], cfg) == (5, 5)
    hits = {(u, v) for u in range(16) for v in range(16) if len(matching_set(cam, (u, v), 2, cfg))}
    assert hits == {(5, 5), (6, 5), (5, 6), (6, 6)}


@pytest.mark.parametrize("r", [1, 2, 3, 4, 5])
def test_splat_offsets_match_inequality(r):
    # offsets o such that pixel p+o satisfies p+o - r/2 <= p < p+o + r/2
    expected = [o for o in range(-r, r + 1) if o - r / 2 <= 0 < o + r / 2]
    np.testing.assert_array_equal(splat_offsets(r), expected)


def _cloud_at_camera_z(zs, view=CameraView(0.0, 0.0, 1.0), cfg=RenderConfig()):
    """World points on the optical axis of the front view at the given camera-space depths."""
    eye = cfg.camera_scale * view.distance
    return PointCloud([[0.0, 0.0, eye - z] for z in zs])


def test_weighted_single_point_collapses():
    cfg = RenderConfig(depth_rule="weighted", dilation=1)
    m = render(_cloud_at_camera_z([2.0]), orthogonal_views()[0], cfg)
    assert m.occupied.sum() == 1
    assert abs(m.depth[112, 112] - (2 / (2 + 1e-12)) / 0.5) < 1e-9
    assert abs(m.depth[112, 112] - 2.0) < 1e-9


def test_minimum_picks_nearest():
    cfg = RenderConfig(dilation=1)
    m = render(_cloud_at_camera_z([1.0, 2.9]), orthogonal_views()[0], cfg)
    assert m.depth[112, 112] == 1.0


def test_weighted_two_points_formula():
    cfg = RenderConfig(depth_rule="weighted", dilation=1)
    m = render(_cloud_at_camera_z([1.0, 2.9]), orthogonal_views()[0], cfg)
    expected = (1 / (1 + 1e-12) + 2.9 / (2.9 + 1e-12)) / (1 / 1.0 + 1 / 2.9)
    assert m.depth[112, 112] == pytest.approx(expected, rel=1e-12)


def test_render_rejects_unnormalized():
    with pytest.raises(InvalidInput):
        render(PointCloud([[2.0, 0, 0]]), orthogonal_views()[0], RenderConfig())


def test_depth_positive_exactly_where_occupied(rng):
    for rule in ("minimum", "weighted"):
        m = render(random_cloud(rng), spherical_views()[7], RenderConfig(depth_rule=rule))
        np.testing.assert_array_equal(m.depth > 0, m.occupied)
        assert np.all(np.isfinite(m.depth))


@pytest.mark.parametrize("rule", ["minimum", "weighted"])
@pytest.mark.parametrize("dilation", [1, 2, 4])
def test_fast_path_matches_oracle_256(rng, rule, dilation):
    cfg = RenderConfig(dilation=dilation, depth_rule=rule)
    cloud = random_cloud(rng, 256)
    for view in spherical_views():
        fast = render(cloud, view, cfg)
        ref = render_reference(cloud, view, cfg)
        np.testing.assert_array_equal(fast.occupied, ref.occupied)
        if rule == "minimum":
            np.testing.assert_array_equal(fast.depth, ref.depth)
        else:
            np.testing.assert_allclose(fast.depth, ref.depth, rtol=1e-9, atol=0)


def test_reference_matches_scalar_matching_set(rng):
    # spot-check pixels against the literal per-pixel matching-set definition
    cfg = RenderConfig(resolution=32, focal=20.0, dilation=2)
    cloud = random_cloud(rng, 64)
    view = spherical_views()[8]
    ref = render_reference(cloud, view, cfg)
    cam = to_camera(cloud.points, view, cfg)
    for v in range(0, 32, 3):
        for u in range(32):
            members = matching_set(cam, (u, v), 2, cfg)
            assert ref.occupied[v, u] == (len(members) > 0)
            if len(members):
                assert ref.depth[v, u] == cam[members, 2].min()


def test_r1_minimum_is_nearest_z_rasterization(rng):
    cfg = RenderConfig(dilation=1)
    cloud = random_cloud(rng, 512)
    view = orthogonal_views()[3]
    m = render(cloud, view, cfg)
    expected = np.zeros((224, 224))
    for x, y, z in to_camera(cloud.points, view, cfg):
        px = project_point((x, y, z), cfg)
        if px is None or not (0 <= px[0] < 224 and 0 <= px[1] < 224):
            continue
        u, v = px
        if expected[v, u] == 0 or z < expected[v, u]:
            expected[v, u] = z
    np.testing.assert_array_equal(m.depth, expected)


@given(st.integers(0, 10**6))
def test_point_order_invariance(seed):
    rng = np.random.default_rng(seed)
    cloud = random_cloud(rng, 200)
    perm = PointCloud(cloud.points[rng.permutation(200)])
    view = spherical_views()[seed % 10]
    a = render(cloud, view, RenderConfig())
    b = render(perm, view, RenderConfig())
    np.testing.assert_array_equal(a.depth, b.depth)
    wa = render(cloud, view, RenderConfig(depth_rule="weighted"))
    wb = render(perm, view, RenderConfig(depth_rule="weighted"))
    np.testing.assert_allclose(wa.depth, wb.depth, rtol=1e-9)


@given(st.integers(0, 10**6))
def test_adding_points_never_reduces_occupancy(seed):
    rng = np.random.default_rng(seed)
    cloud = random_cloud(rng, 300)
    fewer = PointCloud(cloud.points[:150])
    view = spherical_views()[seed % 10]
    for rule in ("minimum", "weighted"):
        cfg = RenderConfig(depth_rule=rule)
        assert render(cloud, view, cfg).occupied.sum() >= render(fewer, view, cfg).occupied.sum()


def test_render_views_order_and_threads(rng):
    cloud = random_cloud(rng)
    views = spherical_views()
    seq = render_views(cloud, views, RenderConfig())
    par = render_views(cloud, views, RenderConfig(), threads=4)
    assert len(seq) == 10
    for v, a, b in zip(views, seq, par):
        single = render(cloud, v, RenderConfig())
        np.testing.assert_array_equal(a.depth, single.depth)
        np.testing.assert_array_equal(b.depth, single.depth)
    rev = render_views(cloud, type(views)(views.views[::-1], "custom"), RenderConfig())
    for a, b in zip(seq, rev[::-1]):
        np.testing.assert_array_equal(a.depth, b.depth)


def test_normalized_cloud_stays_in_front_at_min_jitter(rng):
    cfg = RenderConfig()
    cloud = random_cloud(rng)
    for v in spherical_views():
        cam = to_camera(cloud.points, v.with_distance(0.9), cfg)
        assert cam[:, 2].min() > 0


def test_empty_depth_map():
    m = DepthMap.empty(8)
    assert m.width == m.height == 8 and not m.occupied.any()
