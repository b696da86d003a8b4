from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Literal, Mapping

import numpy as np

from .errors import MissingBeta

Direction = Literal["up", "down"]
Route = Literal["direct", "limit-integral", "window"]
AngleProvenance = Literal["closed-form", "exact-cone", "monte-carlo"]

VOLUME_KIND = "volume"


def kface_kind(k: int) -> str:
    return f"kface:{k}"


def parse_score_kind(kind: str) -> tuple[str, int | None]:
    """Split ``"kface:<k>"`` / ``"volume"`` into (family, k)."""
    if kind == VOLUME_KIND:
        return VOLUME_KIND, None
    family, _, raw_k = kind.partition(":")
    if family != "kface" or not raw_k.isdigit():
        raise ValueError(f"Unknown score kind: {kind!r}")
    return "kface", int(raw_k)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] < 1:
            raise ValueError(f"points must be an (n, d) array, got shape {points.shape}")
        ids = np.arange(points.shape[0]) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (points.shape[0],):
            raise ValueError("ids must have one entry per point")
        if np.unique(ids).size != ids.size:
            raise ValueError("ids must be unique")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "ids", ids)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @cached_property
    def _row_of(self) -> dict[int, int]:
        return {int(point_id): row for row, point_id in enumerate(self.ids)}

    def coords(self, ids: tuple[int, ...] | list[int] | np.ndarray) -> np.ndarray:
        rows = [self._row_of[int(point_id)] for point_id in ids]
        return self.points[rows]

    def row_of(self, point_id: int) -> int:
        return self._row_of[int(point_id)]


@dataclass(frozen=True, slots=True, eq=False)
class Facet:
    vertex_ids: tuple[int, ...]
    normal: np.ndarray
    offset: float


@dataclass(frozen=True, slots=True, eq=False)
class Polytope:
    dim: int
    vertex_ids: tuple[int, ...]
    facets: tuple[Facet, ...]
    # adjacency[i][j] is the facet across the ridge opposite vertex j of facet i, -1 when absent
    adjacency: tuple[tuple[int, ...], ...]
    coplanar_ids: tuple[int, ...] = ()

    def normals(self) -> np.ndarray:
        return np.array([facet.normal for facet in self.facets]).reshape(len(self.facets), self.dim)

    def offsets(self) -> np.ndarray:
        return np.array([facet.offset for facet in self.facets], dtype=float)


@dataclass(frozen=True, slots=True)
class FaceLattice:
    dim: int
    faces_by_dim: Mapping[int, frozenset[tuple[int, ...]]]

    def f_vector(self) -> tuple[int, ...]:
        return tuple(len(self.faces_by_dim.get(k, ())) for k in range(self.dim))

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * count for k, count in enumerate(self.f_vector()))

    def expected_euler_characteristic(self) -> int:
        return 1 - (-1) ** self.dim


@dataclass(frozen=True, slots=True)
class SolidAngle:
    fraction: float
    std_error: float = 0.0


@dataclass(frozen=True, slots=True, eq=False)
class ScalingContext:
    dim: int
    lam: float
    radius: float
    # orthogonal map sending the pole to e_d
    frame: np.ndarray

    @property
    def pole(self) -> np.ndarray:
        return self.frame[-1].copy()


@dataclass(frozen=True, slots=True, eq=False)
class ScaledPoint:
    v: np.ndarray
    h: float


@dataclass(frozen=True, slots=True)
class ScoreRecord:
    vertex_id: int
    kind: str
    value: float
    count: int | None = None
    censored: bool = False


@dataclass(frozen=True, slots=True)
class LimitWindow:
    half_width: float
    h_max: float
    spatial_dim: int

    def __post_init__(self) -> None:
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.spatial_dim < 1:
            raise ValueError("spatial_dim must be at least 1")
        if not np.isfinite(self.h_max):
            raise ValueError("h_max must be finite")

    @property
    def area(self) -> float:
        return float((2.0 * self.half_width) ** self.spatial_dim)

    @property
    def expected_count(self) -> float:
        return self.area * float(np.exp(self.h_max))


@dataclass(frozen=True, eq=False)
class LimitPointSet:
    v: np.ndarray
    h: np.ndarray
    window: LimitWindow
    inserted: np.ndarray | None = None

    def __post_init__(self) -> None:
        m = self.window.spatial_dim
        v = np.asarray(self.v, dtype=float).reshape(-1, m)
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if v.shape[0] != h.shape[0]:
            raise ValueError("v and h must describe the same number of points")
        inserted = (
            np.zeros(h.shape[0], dtype=bool)
            if self.inserted is None
            else np.asarray(self.inserted, dtype=bool).reshape(-1)
        )
        if inserted.shape != h.shape:
            raise ValueError("inserted flags must match the point count")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "inserted", inserted)

    @property
    def size(self) -> int:
        return int(self.h.shape[0])

    @property
    def spatial_dim(self) -> int:
        return self.window.spatial_dim

    def point(self, index: int) -> ScaledPoint:
        return ScaledPoint(v=self.v[index].copy(), h=float(self.h[index]))

    def with_insertions(self, v: np.ndarray, h: np.ndarray | list[float]) -> LimitPointSet:
        extra_v = np.asarray(v, dtype=float).reshape(-1, self.spatial_dim)
        extra_h = np.asarray(h, dtype=float).reshape(-1)
        return LimitPointSet(
            v=np.vstack([self.v, extra_v]),
            h=np.concatenate([self.h, extra_h]),
            window=self.window,
            inserted=np.concatenate([self.inserted, np.ones(extra_h.shape[0], dtype=bool)]),
        )

    def subset(self, mask: np.ndarray) -> tuple[LimitPointSet, np.ndarray]:
        keep = np.flatnonzero(mask)
        return (
            LimitPointSet(v=self.v[keep], h=self.h[keep], window=self.window, inserted=self.inserted[keep]),
            keep,
        )


@dataclass(frozen=True, slots=True, eq=False)
class FestoonFace:
    vertex_ids: tuple[int, ...]
    gradient: np.ndarray
    intercept: float
    # projected apices, one row per vertex id
    simplex: np.ndarray

    def height(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v @ self.gradient + self.intercept - 0.5 * np.sum(v * v, axis=-1)

    def apex(self) -> ScaledPoint:
        return ScaledPoint(
            v=self.gradient.copy(),
            h=float(self.intercept + 0.5 * float(self.gradient @ self.gradient)),
        )


@dataclass(frozen=True, slots=True, eq=False)
class Festoon:
    spatial_dim: int
    faces: tuple[FestoonFace, ...]
    extreme_ids: tuple[int, ...]
    extreme_v: np.ndarray
    extreme_h: np.ndarray

    def faces_containing(self, point_id: int) -> list[FestoonFace]:
        return [face for face in self.faces if point_id in face.vertex_ids]


@dataclass(frozen=True, slots=True)
class Estimate:
    value: float
    std_error: float
    ci95: tuple[float, float]
    replicate_count: int
    censored_count: int = 0

    @classmethod
    def from_normal(
        cls,
        value: float,
        std_error: float,
        replicate_count: int,
        censored_count: int = 0,
    ) -> Estimate:
        half = 1.96 * float(std_error)
        return cls(
            value=float(value),
            std_error=float(std_error),
            ci95=(float(value) - half, float(value) + half),
            replicate_count=int(replicate_count),
            censored_count=int(censored_count),
        )

    def overlaps(self, other: Estimate) -> bool:
        return self.ci95[0] <= other.ci95[1] and other.ci95[0] <= self.ci95[1]


@dataclass(frozen=True, slots=True)
class TracePoint:
    grid_value: float
    estimate: Estimate
    scale: float


@dataclass(frozen=True, slots=True)
class RoutedEstimate:
    constant: str
    route: Route
    estimate: Estimate
    note: str = ""


@dataclass(slots=True)
class ConstantsReport:
    dim: int
    estimates: list[RoutedEstimate] = field(default_factory=list)
    traces: dict[str, list[TracePoint]] = field(default_factory=dict)
    verdicts: dict[str, Any] = field(default_factory=dict)

    def routes_for(self, constant: str) -> list[RoutedEstimate]:
        return [item for item in self.estimates if item.constant == constant]


@dataclass(frozen=True, slots=True)
class InternalAngle:
    value: float
    std_error: float
    provenance: AngleProvenance


@dataclass(slots=True)
class InternalAngleTable:
    entries: dict[tuple[int, int], InternalAngle] = field(default_factory=dict)

    def lookup(self, k: int, d_minus_1: int) -> InternalAngle:
        try:
            return self.entries[(k, d_minus_1)]
        except KeyError:
            raise MissingBeta(f"No internal angle tabulated for k={k}, d-1={d_minus_1}") from None


@dataclass(frozen=True, slots=True)
class ReplicationPlan:
    master_seed: int
    replicate_count: int
    grid: tuple[float, ...]
    functional_kind: str
    dim: int
    params: Mapping[str, Any] = field(default_factory=dict)
