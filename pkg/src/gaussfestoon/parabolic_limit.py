from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations
import logging
import math

import numpy as np

from .errors import DegenerateInput, OutsideDomain
from .hull_core import lower_hull
from .models import (
    VOLUME_KIND,
    Festoon,
    FestoonFace,
    LimitPointSet,
    LimitWindow,
    PointCloud,
    ScaledPoint,
    ScoreRecord,
    kface_kind,
    parse_score_kind,
)

logger = logging.getLogger(__name__)

DEFAULT_H_MAX = 6.0
_BARYCENTRIC_SLACK = 1e-12
_ENVELOPE_CHUNK = 4096
_POSITIVE_PART_LEVELS = 6


@dataclass(frozen=True, slots=True, eq=False)
class ShockLists:
    kinks: np.ndarray
    arc_apices: np.ndarray
    kink_spacings: np.ndarray
    apex_spacings: np.ndarray


@dataclass(frozen=True, slots=True)
class LocalizationResult:
    radius: float
    stabilized: bool


def erosion_width(h_max: float) -> float:
    """Reach of a down-paraboloid at depth ``h_max + 10``."""
    return 2.0 * math.sqrt(2.0 * (h_max + 10.0))


def sample_limit_process(window: LimitWindow, rng: np.random.Generator) -> LimitPointSet:
    count = int(rng.poisson(window.expected_count))
    m = window.spatial_dim
    v = rng.uniform(-window.half_width, window.half_width, size=(count, m))
    # inverse CDF of the density e^(h - h_max) on (-inf, h_max]
    h = window.h_max + np.log1p(-rng.random(count))
    return LimitPointSet(v=v, h=h, window=window)


def lift(w: ScaledPoint) -> np.ndarray:
    v = np.asarray(w.v, dtype=float)
    return np.append(v, w.h + 0.5 * float(v @ v))


def lift_points(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float).reshape(-1)
    return np.column_stack([v, h + 0.5 * np.sum(v * v, axis=1)])


def _lifted_cloud(pts: LimitPointSet) -> PointCloud:
    return PointCloud(points=lift_points(pts.v, pts.h))


def festoon(pts: LimitPointSet, rng: np.random.Generator | None = None) -> Festoon:
    """Lower-hull facets of the lifted set, read back as parabolic faces."""
    d = pts.spatial_dim + 1
    if pts.size == 0:
        raise DegenerateInput("Festoon needs at least one point")
    if pts.size < d:
        ids = tuple(range(pts.size))
        return Festoon(
            spatial_dim=pts.spatial_dim,
            faces=(),
            extreme_ids=ids,
            extreme_v=pts.v.copy(),
            extreme_h=pts.h.copy(),
        )

    poly = lower_hull(_lifted_cloud(pts), rng)
    faces = []
    for facet in poly.facets:
        normal_v, normal_z = facet.normal[:-1], float(facet.normal[-1])
        faces.append(
            FestoonFace(
                vertex_ids=facet.vertex_ids,
                gradient=-normal_v / normal_z,
                intercept=facet.offset / normal_z,
                simplex=pts.v[list(facet.vertex_ids)],
            )
        )
    if poly.coplanar_ids:
        logger.info("Lifted coplanarity: %d points resolved as non-extreme", len(poly.coplanar_ids))
    ids = poly.vertex_ids
    return Festoon(
        spatial_dim=pts.spatial_dim,
        faces=tuple(faces),
        extreme_ids=ids,
        extreme_v=pts.v[list(ids)],
        extreme_h=pts.h[list(ids)],
    )


def extreme_points(pts: LimitPointSet, rng: np.random.Generator | None = None) -> frozenset[int]:
    if pts.size == 0:
        return frozenset()
    return frozenset(festoon(pts, rng).extreme_ids)


def _barycentric(face: FestoonFace, v: np.ndarray) -> np.ndarray:
    base = face.simplex[0]
    spans = (face.simplex[1:] - base).T
    rest = np.linalg.solve(spans, (v - base).T).T
    return np.column_stack([1.0 - rest.sum(axis=1), rest])


def festoon_profile(fest: Festoon, v: np.ndarray) -> np.ndarray:
    """Festoon heights on rows of ``v``; +inf outside the projected domain."""
    grid = np.asarray(v, dtype=float).reshape(-1, fest.spatial_dim)
    heights = np.full(grid.shape[0], np.inf)
    for face in fest.faces:
        weights = _barycentric(face, grid)
        inside = np.all(weights >= -_BARYCENTRIC_SLACK, axis=1)
        if np.any(inside):
            heights[inside] = np.minimum(heights[inside], face.height(grid[inside]))
    for point_v, point_h in zip(fest.extreme_v, fest.extreme_h):
        at_apex = np.all(grid == point_v, axis=1)
        heights[at_apex] = np.minimum(heights[at_apex], point_h)
    return heights


def festoon_height(fest: Festoon, v: np.ndarray | float) -> float:
    height = float(festoon_profile(fest, np.atleast_1d(np.asarray(v, dtype=float)))[0])
    if not np.isfinite(height):
        raise OutsideDomain(f"v={v!r} lies outside the projected hull of the extreme points")
    return height


def up_envelope_height(pts: LimitPointSet, v: np.ndarray | float) -> np.ndarray | float:
    """Lower boundary of the union of up-paraboloids; scalar in, scalar out."""
    if pts.size == 0:
        raise DegenerateInput("Envelope needs at least one point")
    raw = np.asarray(v, dtype=float)
    scalar = raw.ndim == 0 or (raw.ndim == 1 and raw.size == pts.spatial_dim)
    grid = raw.reshape(-1, pts.spatial_dim)
    result = np.empty(grid.shape[0])
    for start in range(0, grid.shape[0], _ENVELOPE_CHUNK):
        block = grid[start : start + _ENVELOPE_CHUNK]
        squared = np.sum((block[:, None, :] - pts.v[None, :, :]) ** 2, axis=2)
        result[start : start + _ENVELOPE_CHUNK] = np.min(pts.h[None, :] + 0.5 * squared, axis=1)
    return float(result[0]) if scalar else result


def _eroded_flags(pts: LimitPointSet, fest: Festoon, erosion: float) -> np.ndarray:
    """Per point: True when the point or any face through it leaves the eroded box."""
    if erosion <= 0.0:
        return np.zeros(pts.size, dtype=bool)
    bound = pts.window.half_width - erosion
    outside = np.any(np.abs(pts.v) > bound, axis=1)
    censored = outside.copy()
    for face in fest.faces:
        if np.any(outside[list(face.vertex_ids)]):
            censored[list(face.vertex_ids)] = True
    return censored


def _resolve_erosion(pts: LimitPointSet, erosion: float | None) -> float:
    return erosion_width(pts.window.h_max) if erosion is None else float(erosion)


def _kface_counts(fest: Festoon, k: int) -> Counter[int]:
    counts: Counter[int] = Counter()
    if not fest.faces:
        if k == 0:
            counts.update(fest.extreme_ids)
        return counts
    seen: set[tuple[int, ...]] = set()
    for face in fest.faces:
        seen.update(combinations(sorted(face.vertex_ids), k + 1))
    for subset in seen:
        counts.update(subset)
    return counts


def limit_kface_scores(
    pts: LimitPointSet,
    k: int,
    fest: Festoon | None = None,
    erosion: float | None = None,
) -> list[ScoreRecord]:
    if not 0 <= k <= pts.spatial_dim:
        raise ValueError(f"k must lie in [0, {pts.spatial_dim}]")
    fest = fest if fest is not None else festoon(pts)
    counts = _kface_counts(fest, k)
    censored = _eroded_flags(pts, fest, _resolve_erosion(pts, erosion))
    if censored.any():
        logger.debug("Censored %d of %d k-face scores", int(censored.sum()), pts.size)
    kind = kface_kind(k)
    return [
        ScoreRecord(
            vertex_id=index,
            kind=kind,
            value=counts[index] / (k + 1),
            count=counts[index],
            censored=bool(censored[index]),
        )
        for index in range(pts.size)
    ]


def face_integral(face: FestoonFace) -> float:
    """Exact integral of the face height over its projected simplex."""
    simplex = face.simplex
    m = simplex.shape[1]
    volume = abs(float(np.linalg.det(simplex[1:] - simplex[0]))) / math.factorial(m)
    centroid = simplex.mean(axis=0)
    affine = volume * (float(face.gradient @ centroid) + face.intercept)
    total = simplex.sum(axis=0)
    second_moment = volume / ((m + 1) * (m + 2)) * (float(np.sum(simplex * simplex)) + float(total @ total))
    return affine - 0.5 * second_moment


def face_positive_integral(face: FestoonFace) -> float:
    """Integral of the positive part of the face height over its projected simplex."""
    m = face.simplex.shape[1]
    if m == 1:
        a, b = float(face.gradient[0]), face.intercept
        discriminant = a * a + 2.0 * b
        if discriminant <= 0.0:
            return 0.0
        root = math.sqrt(discriminant)
        low, high = sorted(float(x) for x in face.simplex[:, 0])
        lo, hi = max(low, a - root), min(high, a + root)
        if lo >= hi:
            return 0.0

        def antiderivative(x: float) -> float:
            return -(x**3) / 6.0 + a * x * x / 2.0 + b * x

        return antiderivative(hi) - antiderivative(lo)
    if m == 2:
        return _subdivided_positive_integral(face, _POSITIVE_PART_LEVELS)
    raise ValueError("Positive-part integration is only available for d - 1 <= 2")


def _subdivided_positive_integral(face: FestoonFace, levels: int) -> float:
    triangles = [face.simplex]
    for _ in range(levels):
        refined = []
        for a, b, c in triangles:
            ab, bc, ca = (a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0
            refined.extend([np.array([a, ab, ca]), np.array([ab, b, bc]), np.array([ca, bc, c]), np.array([ab, bc, ca])])
        triangles = refined
    stacked = np.stack(triangles)
    centroids = stacked.mean(axis=1)
    spans = stacked[:, 1:] - stacked[:, :1]
    areas = np.abs(np.linalg.det(spans)) / 2.0
    return float(np.sum(areas * np.clip(face.height(centroids), 0.0, None)))


def limit_defect_volume_scores(
    pts: LimitPointSet,
    fest: Festoon | None = None,
    erosion: float | None = None,
    positive_part: bool = False,
) -> list[ScoreRecord]:
    fest = fest if fest is not None else festoon(pts)
    d = pts.spatial_dim + 1
    integrate = face_positive_integral if positive_part else face_integral
    totals: dict[int, float] = {}
    for face in fest.faces:
        value = integrate(face)
        for point_id in face.vertex_ids:
            totals[point_id] = totals.get(point_id, 0.0) + value
    censored = _eroded_flags(pts, fest, _resolve_erosion(pts, erosion))
    if censored.any():
        logger.debug("Censored %d of %d volume scores", int(censored.sum()), pts.size)
    return [
        ScoreRecord(
            vertex_id=index,
            kind=VOLUME_KIND,
            value=totals.get(index, 0.0) / d,
            censored=bool(censored[index]),
        )
        for index in range(pts.size)
    ]


def shocks_2d(pts: LimitPointSet, fest: Festoon | None = None) -> ShockLists:
    """Festoon kinks and arc apices in d - 1 = 1, sorted by v, with spacings."""
    if pts.spatial_dim != 1:
        raise ValueError("Shocks are only defined for d - 1 = 1")
    empty = ShockLists(np.empty((0, 2)), np.empty((0, 2)), np.empty(0), np.empty(0))
    if pts.size < 2:
        return empty
    fest = fest if fest is not None else festoon(pts)
    if len(fest.extreme_ids) < 2:
        return empty
    kinks = np.column_stack([fest.extreme_v[:, 0], fest.extreme_h])
    kinks = kinks[np.argsort(kinks[:, 0])]
    tops = [face.apex() for face in fest.faces]
    apices = np.array([[top.v[0], top.h] for top in tops]).reshape(-1, 2)
    apices = apices[np.argsort(apices[:, 0])]
    return ShockLists(
        kinks=kinks,
        arc_apices=apices,
        kink_spacings=np.diff(kinks[:, 0]),
        apex_spacings=np.diff(apices[:, 0]),
    )


def height_functional(pts: LimitPointSet, index: int, fest: Festoon | None = None) -> float:
    """Highest down-paraboloid apex over faces through point ``index``; 0 when not extreme."""
    fest = fest if fest is not None else festoon(pts)
    if index not in fest.extreme_ids:
        return 0.0
    faces = fest.faces_containing(index)
    if not faces:
        return float(pts.h[index])
    return max(face.apex().h for face in faces)


def score_at(pts: LimitPointSet, index: int, kind: str, positive_part: bool = False) -> float:
    """Uncensored score of one point of ``pts``."""
    family, k = parse_score_kind(kind)
    if pts.size == 0:
        return 0.0
    fest = festoon(pts)
    if family == VOLUME_KIND:
        records = limit_defect_volume_scores(pts, fest, erosion=0.0, positive_part=positive_part)
    else:
        records = limit_kface_scores(pts, int(k), fest, erosion=0.0)
    return records[index].value


def restrict_to_cylinder(pts: LimitPointSet, center: np.ndarray, radius: float) -> tuple[LimitPointSet, np.ndarray]:
    distance = np.linalg.norm(pts.v - np.asarray(center, dtype=float).reshape(1, -1), axis=1)
    return pts.subset(distance <= radius)


def localization_radius(
    pts: LimitPointSet,
    index: int,
    score_kind: str,
    r_grid: np.ndarray | list[float],
) -> LocalizationResult:
    grid = np.asarray(r_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("r_grid must be a non-empty increasing sequence")
    target = score_at(pts, index, score_kind)
    center = pts.v[index]
    radius = float(grid[-1])
    stabilized = False
    for r in grid[::-1]:
        local, kept = restrict_to_cylinder(pts, center, float(r))
        local_index = int(np.flatnonzero(kept == index)[0])
        if not math.isclose(score_at(local, local_index, score_kind), target, rel_tol=1e-9, abs_tol=1e-12):
            break
        radius = float(r)
        stabilized = True
    return LocalizationResult(radius=radius, stabilized=stabilized)


def ext_window_counts(
    pts: LimitPointSet,
    sub_half_width: float,
    center: np.ndarray | None = None,
) -> tuple[int, int]:
    """(card Ext(P ∩ Q), card(Ext(P) ∩ Q)) for the box Q of half-width ``sub_half_width``."""
    origin = np.zeros(pts.spatial_dim) if center is None else np.asarray(center, dtype=float)
    inside = np.all(np.abs(pts.v - origin) <= sub_half_width, axis=1)
    restricted, _ = pts.subset(inside)
    local = len(extreme_points(restricted)) if restricted.size else 0
    if pts.size == 0:
        return local, 0
    global_ext = extreme_points(pts)
    return local, sum(1 for index in global_ext if inside[index])


def truncation_changed(pts_high: LimitPointSet, h_max: float, erosion: float | None = None) -> bool:
    """Whether cutting ``pts_high`` down to ``h <= h_max`` changes Ext or faces on the eroded box."""
    window = LimitWindow(pts_high.window.half_width, h_max, pts_high.spatial_dim)
    low, kept = pts_high.subset(pts_high.h <= h_max)
    low = LimitPointSet(v=low.v, h=low.h, window=window, inserted=low.inserted)
    bound = window.half_width - (erosion_width(h_max) if erosion is None else erosion)
    if bound <= 0.0 or low.size == 0:
        return False

    def central(fest: Festoon, ids_map: np.ndarray, v: np.ndarray) -> tuple[frozenset, frozenset]:
        interior = np.all(np.abs(v) <= bound, axis=1)
        extremes = frozenset(int(ids_map[i]) for i in fest.extreme_ids if interior[i])
        faces = frozenset(
            tuple(sorted(int(ids_map[i]) for i in face.vertex_ids))
            for face in fest.faces
            if np.all(interior[list(face.vertex_ids)])
        )
        return extremes, faces

    high = central(festoon(pts_high), np.arange(pts_high.size), pts_high.v)
    cut = central(festoon(low), kept, low.v)
    return high != cut
