from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
import logging
import math

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import ConvexHull, QhullError
from scipy.stats import chi

from .errors import DegenerateInput, LambdaTooSmall, OriginNotInterior
from .hull_core import (
    DEFAULT_DIRECTION_BUDGET,
    TOLERANCE,
    affine_rank,
    convex_hull,
    face_lattice,
    facet_cone_solid_angle,
    polytope_volume,
)
from .models import (
    VOLUME_KIND,
    Direction,
    PointCloud,
    Polytope,
    ScaledPoint,
    ScalingContext,
    ScoreRecord,
    kface_kind,
)

logger = logging.getLogger(__name__)

DEFAULT_KUBOTA_SUBSPACES = 256
_MAX_REJECTION_FACTOR = 10


@dataclass(frozen=True, slots=True)
class KubotaEstimate:
    value: float
    std_error: float
    subspaces: int
    rejected: int = 0

    @property
    def mc_variance(self) -> float:
        return self.std_error**2


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(1.0 + d / 2.0)


def kubota_constant(d: int, k: int) -> float:
    return (math.factorial(d) * unit_ball_volume(d)) / (
        math.factorial(k) * unit_ball_volume(k) * math.factorial(d - k) * unit_ball_volume(d - k)
    )


def sample_binomial(n: int, d: int, rng: np.random.Generator) -> PointCloud:
    if n < 1:
        raise ValueError("n must be at least 1")
    return PointCloud(points=rng.standard_normal((n, d)))


def sample_poisson_gaussian(lam: float, d: int, rng: np.random.Generator) -> PointCloud:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    count = int(rng.poisson(lam))
    return PointCloud(points=rng.standard_normal((count, d)).reshape(count, d))


def sample_poisson_gaussian_tail(lam: float, d: int, r_min: float, rng: np.random.Generator) -> PointCloud:
    """Points of the Poisson-Gaussian process with norm at least ``r_min``, sampled exactly."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    tail_mass = float(chi.sf(r_min, d))
    count = int(rng.poisson(lam * tail_mass))
    radii = chi.isf(rng.random(count) * tail_mass, d)
    directions = rng.standard_normal((count, d)).reshape(count, d)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return PointCloud(points=directions * np.asarray(radii, dtype=float).reshape(count, 1))


def _radius_argument(log_lam: float, d: int) -> float:
    return 2.0 * log_lam - math.log(2.0 * (2.0 * math.pi) ** d * log_lam)


@lru_cache(maxsize=None)
def lambda_threshold(d: int) -> float:
    """Smallest intensity with critical radius >= 1 (the larger root; the argument is convex in log lambda)."""
    log_lam = brentq(lambda t: _radius_argument(t, d) - 1.0, 0.5, 50.0 * d + 50.0, xtol=1e-14)
    return math.exp(log_lam)


def critical_radius(lam: float, d: int) -> float:
    if lam <= 1.0 or lam < lambda_threshold(d):
        raise LambdaTooSmall(f"lambda={lam} is below lambda_0={lambda_threshold(d):.6g} for d={d}")
    return math.sqrt(_radius_argument(math.log(lam), d))


def scaling_context(lam: float, dim: int, pole: np.ndarray | None = None) -> ScalingContext:
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    radius = critical_radius(lam, dim)
    frame = np.eye(dim)
    if pole is not None:
        pole = np.asarray(pole, dtype=float)
        if pole.shape != (dim,) or abs(float(np.linalg.norm(pole)) - 1.0) > 1e-12:
            raise ValueError("pole must be a unit vector of the ambient dimension")
        target = np.eye(dim)[-1]
        reflector = pole - target
        length = float(reflector @ reflector)
        if length > 1e-24:
            frame = np.eye(dim) - 2.0 * np.outer(reflector, reflector) / length
    return ScalingContext(dim=dim, lam=float(lam), radius=radius, frame=frame)


def exp_map(v: np.ndarray) -> np.ndarray:
    """Exponential map of the unit sphere at (0, ..., 0, 1); rows of ``v`` are tangent vectors."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(norm > 0.0, norm, 1.0)
    spatial = np.sin(norm) * v / safe
    return np.concatenate([spatial, np.cos(norm)], axis=-1)


def inv_exp_map(u: np.ndarray) -> np.ndarray:
    """Inverse exponential map; the antipode of the pole maps to (0, ..., 0, pi)."""
    u = np.asarray(u, dtype=float)
    spatial = u[..., :-1]
    spatial_norm = np.linalg.norm(spatial, axis=-1, keepdims=True)
    angle = np.arctan2(spatial_norm, u[..., -1:])
    safe = np.where(spatial_norm > 0.0, spatial_norm, 1.0)
    tangent = angle * spatial / safe
    antipodal = (spatial_norm[..., 0] == 0.0) & (u[..., -1] < 0.0)
    if np.any(antipodal):
        convention = np.zeros(spatial.shape[-1])
        convention[-1] = math.pi
        tangent = np.where(antipodal[..., None], convention, tangent)
    return tangent


def scale_points(points: np.ndarray, ctx: ScalingContext) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised scaling transform: rows of ``points`` to (v, h) arrays."""
    points = np.asarray(points, dtype=float).reshape(-1, ctx.dim)
    radius = ctx.radius
    norms = np.linalg.norm(points, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    directions = (points / safe[:, None]) @ ctx.frame.T
    v = radius * inv_exp_map(directions)
    v[norms == 0.0] = 0.0
    h = radius**2 * (1.0 - norms / radius)
    return v, h


def inverse_scale_points(v: np.ndarray, h: np.ndarray, ctx: ScalingContext) -> np.ndarray:
    radius = ctx.radius
    v = np.asarray(v, dtype=float).reshape(-1, ctx.dim - 1)
    h = np.asarray(h, dtype=float).reshape(-1)
    directions = exp_map(v / radius) @ ctx.frame
    return directions * (radius - h / radius)[:, None]


def scale_transform(x: np.ndarray, ctx: ScalingContext) -> ScaledPoint:
    v, h = scale_points(np.asarray(x, dtype=float)[None, :], ctx)
    return ScaledPoint(v=v[0], h=float(h[0]))


def inverse_scale_transform(w: ScaledPoint, ctx: ScalingContext) -> np.ndarray:
    return inverse_scale_points(w.v[None, :], np.array([w.h]), ctx)[0]


def kface_scores(cloud: PointCloud, k: int, polytope: Polytope | None = None) -> list[ScoreRecord]:
    """Per-point k-face functional; counts are divided by k + 1 only at the end."""
    if not 0 <= k < cloud.dim:
        raise ValueError(f"k must lie in [0, {cloud.dim - 1}]")
    poly = polytope if polytope is not None else convex_hull(cloud)
    lattice = face_lattice(poly)
    counts: Counter[int] = Counter()
    for face in lattice.faces_by_dim[k]:
        counts.update(face)
    kind = kface_kind(k)
    return [
        ScoreRecord(vertex_id=int(point_id), kind=kind, value=counts[int(point_id)] / (k + 1), count=counts[int(point_id)])
        for point_id in cloud.ids
    ]


def facet_defect_contributions(
    cloud: PointCloud,
    ctx: ScalingContext,
    poly: Polytope,
    rng: np.random.Generator | None = None,
    directions: int = DEFAULT_DIRECTION_BUDGET,
) -> np.ndarray:
    """Per-facet Vol(cone ∩ B(0, R)) - Vol(cone ∩ K), in facet order."""
    if np.any(poly.offsets() <= TOLERANCE):
        raise OriginNotInterior("Origin is not interior to the hull")
    d = cloud.dim
    ball = unit_ball_volume(d) * ctx.radius**d
    contributions = np.empty(len(poly.facets))
    for index, facet in enumerate(poly.facets):
        vertices = cloud.coords(facet.vertex_ids)
        angle = facet_cone_solid_angle(vertices, rng=rng, directions=directions)
        simplex = abs(float(np.linalg.det(vertices))) / math.factorial(d)
        contributions[index] = angle.fraction * ball - simplex
    return contributions


def defect_volume_scores(
    cloud: PointCloud,
    ctx: ScalingContext,
    polytope: Polytope | None = None,
    rng: np.random.Generator | None = None,
    directions: int = DEFAULT_DIRECTION_BUDGET,
) -> list[ScoreRecord]:
    poly = polytope if polytope is not None else convex_hull(cloud)
    contributions = facet_defect_contributions(cloud, ctx, poly, rng=rng, directions=directions)
    totals: dict[int, float] = {}
    for facet, contribution in zip(poly.facets, contributions):
        for point_id in facet.vertex_ids:
            totals[point_id] = totals.get(point_id, 0.0) + float(contribution)
    scale = ctx.radius / cloud.dim
    return [
        ScoreRecord(vertex_id=int(point_id), kind=VOLUME_KIND, value=scale * totals.get(int(point_id), 0.0))
        for point_id in cloud.ids
    ]


def intrinsic_volume(
    cloud: PointCloud,
    k: int,
    num_subspaces: int = DEFAULT_KUBOTA_SUBSPACES,
    rng: np.random.Generator | None = None,
    polytope: Polytope | None = None,
) -> KubotaEstimate:
    """Kubota Monte Carlo over Haar-random k-subspaces (QR of Gaussian frames)."""
    d = cloud.dim
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}]")
    poly = polytope if polytope is not None else convex_hull(cloud)
    if k == d:
        return KubotaEstimate(value=polytope_volume(poly, cloud), std_error=0.0, subspaces=0)

    generator = rng if rng is not None else np.random.Generator(np.random.Philox(0))
    vertices = cloud.coords(poly.vertex_ids)
    volumes: list[float] = []
    rejected = 0
    while len(volumes) < num_subspaces:
        basis, _ = np.linalg.qr(generator.standard_normal((d, k)))
        projected = vertices @ basis
        if k == 1:
            volumes.append(float(np.ptp(projected[:, 0])))
            continue
        volume = _projected_volume(projected, k)
        if volume is None:
            rejected += 1
            if rejected > _MAX_REJECTION_FACTOR * num_subspaces:
                raise DegenerateInput("Too many degenerate projections")
            continue
        volumes.append(volume)
    if rejected:
        logger.info("Kubota estimate rejected %d degenerate projections", rejected)

    constant = kubota_constant(d, k)
    samples = np.asarray(volumes)
    std_error = constant * float(samples.std(ddof=1)) / math.sqrt(samples.size) if samples.size > 1 else 0.0
    return KubotaEstimate(
        value=constant * float(samples.mean()),
        std_error=std_error,
        subspaces=samples.size,
        rejected=rejected,
    )


def _projected_volume(projected: np.ndarray, k: int) -> float | None:
    if projected.shape[0] < k + 1 or affine_rank(projected) < k:
        return None
    try:
        return float(ConvexHull(projected).volume)
    except QhullError:
        return None


def quasi_paraboloid_boundary(
    w: ScaledPoint,
    ctx: ScalingContext,
    direction: Direction,
    v_grid: np.ndarray,
) -> np.ndarray:
    """Boundary heights over ``v_grid`` of the up or down quasi-paraboloid with apex ``w``."""
    radius = ctx.radius
    apex = exp_map(np.asarray(w.v, dtype=float) / radius)
    grid = np.asarray(v_grid, dtype=float).reshape(-1, ctx.dim - 1)
    points = exp_map(grid / radius)
    # 1 - cos(e) = |u - u0|^2 / 2 keeps precision near the apex
    one_minus_cos = 0.5 * np.sum((points - apex) ** 2, axis=1)
    cosine = 1.0 - one_minus_cos
    if direction == "up":
        return radius**2 * one_minus_cos + w.h * cosine
    if direction == "down":
        heights = np.full(grid.shape[0], -np.inf)
        reach = cosine > 0.0
        heights[reach] = radius**2 - (radius**2 - w.h) / cosine[reach]
        return heights
    raise ValueError(f"Unknown direction: {direction!r}")


def _angular_factor(v: np.ndarray, ctx: ScalingContext) -> np.ndarray:
    scaled = np.linalg.norm(np.asarray(v, dtype=float).reshape(-1, ctx.dim - 1), axis=1) / ctx.radius
    return np.sinc(scaled / math.pi) ** (ctx.dim - 2)


def rescaled_volume_density(v: np.ndarray, h: np.ndarray | float, ctx: ScalingContext) -> np.ndarray:
    h = np.asarray(h, dtype=float).reshape(-1)
    radial = np.clip(1.0 - h / ctx.radius**2, 0.0, None) ** (ctx.dim - 1)
    return _angular_factor(v, ctx) * radial


def rescaled_intensity(v: np.ndarray, h: np.ndarray | float, ctx: ScalingContext) -> np.ndarray:
    h = np.asarray(h, dtype=float).reshape(-1)
    prefactor = math.sqrt(2.0 * math.log(ctx.lam)) / ctx.radius
    return prefactor * rescaled_volume_density(v, h, ctx) * np.exp(h - h**2 / (2.0 * ctx.radius**2))
