from __future__ import annotations

from itertools import combinations
import logging
import math

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateInput, OriginOnFacetHull
from .models import FaceLattice, Facet, PointCloud, Polytope, SolidAngle

logger = logging.getLogger(__name__)

TOLERANCE = 1e-10
DEFAULT_DIRECTION_BUDGET = 100_000
_DIRECTION_BATCH = 20_000


def affine_rank(points: np.ndarray, tol: float = TOLERANCE) -> int:
    points = np.asarray(points, dtype=float)
    if points.shape[0] <= 1:
        return 0
    singular = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if singular.size == 0 or singular[0] == 0.0:
        return 0
    return int(np.sum(singular > tol * singular[0]))


def convex_hull(cloud: PointCloud, rng: np.random.Generator | None = None) -> Polytope:
    """Simplicial hull of ``cloud``; facet vertex sets are cloud ids.

    Points are inserted in an order shuffled by ``rng``; the result does not
    depend on that order.
    """
    d = cloud.dim
    if d < 2:
        raise DegenerateInput("Hull construction needs dimension >= 2")
    if cloud.size < d + 1:
        raise DegenerateInput(f"Need at least {d + 1} points in dimension {d}, got {cloud.size}")
    rank = affine_rank(cloud.points)
    if rank < d:
        raise DegenerateInput(f"Affine dimension {rank} is below {d}")

    order = rng.permutation(cloud.size) if rng is not None else np.arange(cloud.size)
    try:
        hull = ConvexHull(cloud.points[order])
    except QhullError as exc:
        raise DegenerateInput(f"Qhull rejected the input: {exc}") from exc

    ids = cloud.ids[order]
    facets = tuple(
        Facet(
            vertex_ids=tuple(int(point_id) for point_id in ids[simplex]),
            normal=np.array(equation[:-1], dtype=float),
            offset=float(-equation[-1]),
        )
        for simplex, equation in zip(hull.simplices, hull.equations)
    )
    adjacency = tuple(tuple(int(neighbor) for neighbor in row) for row in hull.neighbors)
    vertex_ids = tuple(sorted(int(point_id) for point_id in ids[hull.vertices]))
    coplanar_ids: tuple[int, ...] = ()
    if hull.coplanar.size:
        coplanar_ids = tuple(sorted(int(ids[row]) for row in hull.coplanar[:, 0]))
        logger.debug("Tolerance ties resolved as non-vertices: %s", coplanar_ids)
    return Polytope(
        dim=d,
        vertex_ids=vertex_ids,
        facets=facets,
        adjacency=adjacency,
        coplanar_ids=coplanar_ids,
    )


def face_lattice(poly: Polytope) -> FaceLattice:
    faces: dict[int, set[tuple[int, ...]]] = {k: set() for k in range(poly.dim)}
    for facet in poly.facets:
        ordered = tuple(sorted(facet.vertex_ids))
        for k in range(poly.dim):
            faces[k].update(combinations(ordered, k + 1))
    return FaceLattice(dim=poly.dim, faces_by_dim={k: frozenset(items) for k, items in faces.items()})


def polytope_volume(poly: Polytope, cloud: PointCloud) -> float:
    if not poly.facets:
        return 0.0
    reference = cloud.coords(poly.vertex_ids).mean(axis=0)
    stacked = np.stack([cloud.coords(facet.vertex_ids) - reference for facet in poly.facets])
    return float(np.sum(np.abs(np.linalg.det(stacked))) / math.factorial(poly.dim))


def facet_cone_solid_angle(
    vertices: np.ndarray,
    rng: np.random.Generator | None = None,
    directions: int = DEFAULT_DIRECTION_BUDGET,
) -> SolidAngle:
    """Fraction of the unit sphere covered by the cone from the origin over a facet.

    ``vertices`` holds one facet vertex per row. Closed forms in d = 2, 3;
    direction sampling with a reported standard error above.
    """
    vertices = np.asarray(vertices, dtype=float)
    d = vertices.shape[-1]
    if vertices.shape != (d, d) or d < 2:
        raise ValueError(f"Expected a ({d}, {d}) vertex array, got {vertices.shape}")
    norms = np.linalg.norm(vertices, axis=1)
    determinant = float(np.linalg.det(vertices))
    if np.any(norms == 0.0) or abs(determinant) <= TOLERANCE * float(np.prod(norms)):
        raise OriginOnFacetHull("Origin lies in the facet hyperplane")

    if d == 2:
        a, b = vertices
        angle = math.atan2(abs(a[0] * b[1] - a[1] * b[0]), float(a @ b))
        return SolidAngle(fraction=angle / (2.0 * math.pi))

    if d == 3:
        a, b, c = vertices
        na, nb, nc = norms
        denominator = na * nb * nc + float(a @ b) * nc + float(a @ c) * nb + float(b @ c) * na
        omega = 2.0 * math.atan2(abs(determinant), denominator)
        return SolidAngle(fraction=omega / (4.0 * math.pi))

    generator = rng if rng is not None else np.random.Generator(np.random.Philox(0))
    transposed = vertices.T
    hits = 0
    drawn = 0
    while drawn < directions:
        batch = min(_DIRECTION_BATCH, directions - drawn)
        samples = generator.standard_normal((batch, d))
        coefficients = np.linalg.solve(transposed, samples.T)
        hits += int(np.count_nonzero(np.all(coefficients >= 0.0, axis=0)))
        drawn += batch
    fraction = hits / drawn
    return SolidAngle(fraction=fraction, std_error=math.sqrt(fraction * (1.0 - fraction) / drawn))


def lower_hull(cloud: PointCloud, rng: np.random.Generator | None = None) -> Polytope:
    """Facets of the hull whose outward normal points down in the last coordinate."""
    d = cloud.dim
    if cloud.size < d:
        raise DegenerateInput(f"Lower hull in dimension {d} needs at least {d} points")
    if cloud.size == d:
        return _single_lower_facet(cloud)

    poly = convex_hull(cloud, rng)
    keep = [index for index, facet in enumerate(poly.facets) if facet.normal[-1] < -TOLERANCE]
    renumber = {old: new for new, old in enumerate(keep)}
    adjacency = tuple(
        tuple(renumber.get(neighbor, -1) for neighbor in poly.adjacency[old]) for old in keep
    )
    facets = tuple(poly.facets[old] for old in keep)
    vertex_ids = tuple(sorted({point_id for facet in facets for point_id in facet.vertex_ids}))
    return Polytope(
        dim=d,
        vertex_ids=vertex_ids,
        facets=facets,
        adjacency=adjacency,
        coplanar_ids=poly.coplanar_ids,
    )


def _single_lower_facet(cloud: PointCloud) -> Polytope:
    d = cloud.dim
    points = cloud.points
    if d == 1:
        raise DegenerateInput("Lower hull needs dimension >= 2")
    spans = points[1:] - points[0]
    _, singular, right = np.linalg.svd(spans)
    if singular.size < d - 1 or singular[-1] <= TOLERANCE * max(singular[0], 1.0):
        raise DegenerateInput("Points do not span a hyperplane")
    normal = right[-1]
    if normal[-1] > 0:
        normal = -normal
    if abs(normal[-1]) <= TOLERANCE:
        raise DegenerateInput("Vertical facet has no lower side")
    facet = Facet(
        vertex_ids=tuple(int(point_id) for point_id in cloud.ids),
        normal=normal,
        offset=float(normal @ points[0]),
    )
    return Polytope(
        dim=d,
        vertex_ids=tuple(sorted(int(point_id) for point_id in cloud.ids)),
        facets=(facet,),
        adjacency=((-1,) * d,),
    )
