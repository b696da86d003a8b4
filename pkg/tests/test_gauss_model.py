from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import chi

from gaussfestoon.errors import LambdaTooSmall, OriginNotInterior
from gaussfestoon.gauss_model import (
    critical_radius,
    defect_volume_scores,
    exp_map,
    facet_defect_contributions,
    intrinsic_volume,
    inv_exp_map,
    inverse_scale_transform,
    kface_scores,
    kubota_constant,
    lambda_threshold,
    quasi_paraboloid_boundary,
    rescaled_intensity,
    sample_binomial,
    sample_poisson_gaussian,
    sample_poisson_gaussian_tail,
    scale_transform,
    scaling_context,
    unit_ball_volume,
)
from gaussfestoon.hull_core import convex_hull, polytope_volume
from gaussfestoon.models import VOLUME_KIND, PointCloud, ScaledPoint


def _unit_square() -> PointCloud:
    return PointCloud(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def _octahedron(scale: float = 1.0) -> PointCloud:
    eye = np.eye(3) * scale
    return PointCloud(np.vstack([eye, -eye]))


def test_ball_volumes_and_kubota_constant() -> None:
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)
    assert kubota_constant(3, 1) == pytest.approx(2.0)
    assert kubota_constant(2, 1) == pytest.approx(math.pi / 2.0)


def test_samplers_shapes() -> None:
    rng = np.random.default_rng(3)

    assert sample_binomial(25, 3, rng).points.shape == (25, 3)
    cloud = sample_poisson_gaussian(40.0, 2, rng)
    assert cloud.points.shape[1] == 2
    with pytest.raises(ValueError):
        sample_binomial(0, 2, rng)
    with pytest.raises(ValueError):
        sample_poisson_gaussian(0.0, 2, rng)


def test_tail_sampler_respects_radius_and_mass() -> None:
    rng = np.random.default_rng(9)
    lam, r_min = 20_000.0, 2.5
    counts = []
    for _ in range(20):
        cloud = sample_poisson_gaussian_tail(lam, 3, r_min, rng)
        assert np.all(np.linalg.norm(cloud.points, axis=1) >= r_min - 1e-9)
        counts.append(cloud.size)

    expected = lam * chi.sf(r_min, 3)
    assert np.mean(counts) == pytest.approx(expected, rel=0.05)


def test_critical_radius_formula_and_threshold() -> None:
    lam, d = 1e6, 2
    log_lam = math.log(lam)
    expected = math.sqrt(2.0 * log_lam - math.log(2.0 * (2.0 * math.pi) ** d * log_lam))

    assert critical_radius(lam, d) == pytest.approx(expected)
    threshold = lambda_threshold(3)
    assert critical_radius(threshold * (1.0 + 1e-9), 3) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(LambdaTooSmall):
        critical_radius(threshold * 0.99, 3)


def test_exp_map_inverse_and_antipode() -> None:
    v = np.array([[0.3, -0.2], [1.0, 2.0], [0.0, 0.0]])

    assert np.allclose(inv_exp_map(exp_map(v)), v)
    assert np.allclose(np.linalg.norm(exp_map(v), axis=1), 1.0)
    assert np.allclose(inv_exp_map(np.array([0.0, 0.0, -1.0])), [0.0, math.pi])


def test_scale_transform_fixes_pole_and_origin() -> None:
    ctx = scaling_context(1e6, 3)
    at_pole = scale_transform(np.array([0.0, 0.0, ctx.radius]), ctx)

    assert np.allclose(at_pole.v, 0.0)
    assert at_pole.h == pytest.approx(0.0, abs=1e-9)
    assert scale_transform(np.zeros(3), ctx).h == pytest.approx(ctx.radius**2)


def test_scale_transform_with_rotated_pole() -> None:
    pole = np.array([1.0, 0.0, 0.0])
    ctx = scaling_context(1e6, 3, pole=pole)
    w = scale_transform(ctx.radius * pole, ctx)

    assert np.allclose(ctx.pole, pole)
    assert np.allclose(w.v, 0.0)
    x = np.array([1.5, -0.4, 2.2])
    assert np.allclose(inverse_scale_transform(scale_transform(x, ctx), ctx), x)


def test_kface_scores_sum_to_face_counts() -> None:
    cloud = _octahedron()
    edges = kface_scores(cloud, 1)
    vertices = kface_scores(cloud, 0)

    assert sum(record.value for record in edges) == pytest.approx(12.0)
    assert all(record.count == 4 for record in edges)
    assert sum(record.value for record in vertices) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        kface_scores(cloud, 3)


def test_interior_points_score_zero() -> None:
    cloud = PointCloud(np.vstack([np.eye(3), -np.eye(3), [[0.1, 0.0, 0.0]]]))
    scores = {record.vertex_id: record.value for record in kface_scores(cloud, 0)}

    assert scores[6] == 0.0


def test_defect_volume_scores_add_up_to_scaled_defect() -> None:
    ctx = scaling_context(1e6, 3)
    cloud = _octahedron(scale=2.0)
    records = defect_volume_scores(cloud, ctx)
    defect = unit_ball_volume(3) * ctx.radius**3 - polytope_volume(convex_hull(cloud), cloud)

    assert all(record.kind == VOLUME_KIND for record in records)
    assert sum(record.value for record in records) == pytest.approx(ctx.radius * defect)


def test_defect_needs_origin_inside() -> None:
    ctx = scaling_context(1e6, 2)
    cloud = PointCloud(_unit_square().points + 1.0)
    with pytest.raises(OriginNotInterior):
        facet_defect_contributions(cloud, ctx, convex_hull(cloud))


def test_intrinsic_volume_of_square_and_cube() -> None:
    rng = np.random.default_rng(21)
    square = intrinsic_volume(_unit_square(), 1, num_subspaces=4000, rng=rng)
    assert abs(square.value - 2.0) < 5.0 * square.std_error

    corners = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    cube = intrinsic_volume(PointCloud(corners), 2, num_subspaces=2000, rng=rng)
    assert abs(cube.value - 3.0) < 5.0 * cube.std_error
    assert cube.mc_variance == pytest.approx(cube.std_error**2)

    full = intrinsic_volume(_unit_square(), 2)
    assert full.value == pytest.approx(1.0)
    assert full.std_error == 0.0


def test_quasi_paraboloids_touch_at_apex_and_approach_parabolas() -> None:
    ctx = scaling_context(1e12, 2)
    apex = ScaledPoint(v=np.array([0.0]), h=0.5)
    grid = np.array([[0.0], [0.3], [1.0]])
    up = quasi_paraboloid_boundary(apex, ctx, "up", grid)
    down = quasi_paraboloid_boundary(apex, ctx, "down", grid)

    assert up[0] == pytest.approx(0.5)
    assert down[0] == pytest.approx(0.5)
    assert np.all(up >= down)
    assert up[1] == pytest.approx(0.5 + 0.045, abs=1e-2)
    assert down[1] == pytest.approx(0.5 - 0.045, abs=1e-2)
    with pytest.raises(ValueError):
        quasi_paraboloid_boundary(apex, ctx, "sideways", grid)


def test_rescaled_intensity_tracks_exponential() -> None:
    ratios = []
    for lam in (1e4, 1e8, 1e16):
        ctx = scaling_context(lam, 2)
        ratios.append(float(rescaled_intensity(np.zeros((1, 1)), 0.0, ctx)[0]))

    assert all(ratio > 0.0 for ratio in ratios)
    assert abs(ratios[-1] - 1.0) < abs(ratios[0] - 1.0)
