from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .gauss_model import (
    quasi_paraboloid_boundary,
    rescaled_intensity,
    sample_poisson_gaussian,
    sample_poisson_gaussian_tail,
    scale_points,
    scaling_context,
)
from .hull_core import convex_hull
from .models import LimitPointSet, LimitWindow, ScaledPoint, ScalingContext
from .parabolic_limit import (
    DEFAULT_H_MAX,
    erosion_width,
    extreme_points,
    festoon,
    height_functional,
    localization_radius,
    sample_limit_process,
    shocks_2d,
    truncation_changed,
)
from .rng import replicate_stream

logger = logging.getLogger(__name__)

TAIL_CORRELATION_TARGET = 0.95
TRUNCATION_RATE_LIMIT = 1e-3

_INTENSITY_STREAM = 2_000
_HEIGHT_STREAM = 2_001
_LOCALIZATION_STREAM = 2_002
_MAPPED_STREAM = 2_003
_AUDIT_STREAM = 2_004
_SHOCK_STREAM = 2_005


@dataclass(frozen=True, slots=True)
class ParalemRow:
    lam: float
    h1: float
    radius: float
    up_distance: float
    down_distance: float

    @property
    def scaled_distance(self) -> float:
        return self.radius * max(self.up_distance, self.down_distance)


@dataclass(frozen=True, slots=True)
class IntensityRow:
    lam: float
    observed: tuple[int, ...]
    expected_limit: tuple[float, ...]
    expected_exact: tuple[float, ...]
    chi2_limit: float
    chi2_exact: float
    dof: int

    @property
    def p_value_exact(self) -> float:
        return float(stats.chi2.sf(self.chi2_exact, self.dof))


@dataclass(frozen=True, slots=True)
class TailFit:
    t_grid: tuple[float, ...]
    survival: tuple[float, ...]
    sample_count: int
    correlation: float

    @property
    def monotone(self) -> bool:
        return all(later <= earlier for earlier, later in zip(self.survival, self.survival[1:]))

    @property
    def consistent(self) -> bool:
        return self.monotone and self.correlation >= TAIL_CORRELATION_TARGET


@dataclass(frozen=True, slots=True)
class MappedExtremes:
    lam: float
    hull_vertices: int
    disagreements: int

    @property
    def rate(self) -> float:
        return self.disagreements / max(self.hull_vertices, 1)


@dataclass(frozen=True, slots=True)
class AuditResult:
    replicates: int
    changed: int

    @property
    def rate(self) -> float:
        return self.changed / self.replicates if self.replicates else 0.0

    @property
    def passed(self) -> bool:
        return self.rate <= TRUNCATION_RATE_LIMIT


@dataclass(frozen=True, slots=True)
class ShockSummary:
    kink_count: int
    apex_count: int
    kink_spacing_mean: float
    kink_spacing_var: float
    apex_spacing_mean: float
    apex_spacing_var: float


def _cylinder_grid(m: int, half_length: float, points: int) -> np.ndarray:
    axis = np.linspace(-half_length, half_length, points)
    if m == 1:
        return axis[:, None]
    mesh = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    return mesh[np.linalg.norm(mesh, axis=1) <= half_length]


def paralem_scan(
    lam_grid: Sequence[float],
    h1_values: Sequence[float] = (-2.0, 0.0, 2.0),
    dim: int = 2,
    half_length: float = 3.0,
    points: int = 201,
) -> list[ParalemRow]:
    """Sup-distance between quasi-paraboloids and ideal paraboloids over a cylinder."""
    grid = _cylinder_grid(dim - 1, half_length, points)
    squared = 0.5 * np.sum(grid * grid, axis=1)
    rows = []
    for lam in lam_grid:
        ctx = scaling_context(lam, dim)
        for h1 in h1_values:
            apex = ScaledPoint(v=np.zeros(dim - 1), h=float(h1))
            up = quasi_paraboloid_boundary(apex, ctx, "up", grid)
            down = quasi_paraboloid_boundary(apex, ctx, "down", grid)
            rows.append(
                ParalemRow(
                    lam=float(lam),
                    h1=float(h1),
                    radius=ctx.radius,
                    up_distance=float(np.max(np.abs(up - (h1 + squared)))),
                    down_distance=float(np.max(np.abs(down - (h1 - squared)))),
                )
            )
    return rows


def intensity_ratio(lam: float, dim: int, v: np.ndarray, h: float) -> float:
    """Exact rescaled intensity over the limit intensity e^h at one point."""
    ctx = scaling_context(lam, dim)
    return float(rescaled_intensity(np.asarray(v, dtype=float).reshape(1, -1), h, ctx)[0]) / math.exp(h)


def _exact_bin_mass(ctx: ScalingContext, v_half: float, low: float, high: float) -> float:
    m = ctx.dim - 1

    def density(*args: float) -> float:
        *v, h = args
        return float(rescaled_intensity(np.array([v]), h, ctx)[0])

    value, _ = integrate.nquad(density, [(-v_half, v_half)] * m + [(low, high)])
    return float(value)


def intensity_check(
    lam_grid: Sequence[float],
    dim: int,
    reps: int,
    seed: int,
    v_half: float = 2.0,
    h_edges: Sequence[float] = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0),
) -> list[IntensityRow]:
    """Binned heights of the mapped sample in a fixed box against the limit and exact intensities."""
    edges = np.asarray(h_edges, dtype=float)
    box = (2.0 * v_half) ** (dim - 1)
    expected_limit = reps * box * np.diff(np.exp(edges))
    rows = []
    for grid_index, lam in enumerate(lam_grid):
        ctx = scaling_context(lam, dim)
        r_min = ctx.radius - edges[-1] / ctx.radius
        observed = np.zeros(edges.size - 1, dtype=np.int64)
        for replicate in range(reps):
            rng = replicate_stream(seed, replicate, _INTENSITY_STREAM + grid_index)
            cloud = sample_poisson_gaussian_tail(lam, dim, r_min, rng)
            v, h = scale_points(cloud.points, ctx)
            inside = np.all(np.abs(v) <= v_half, axis=1)
            observed += np.histogram(h[inside], bins=edges)[0]
        expected_exact = reps * np.array(
            [_exact_bin_mass(ctx, v_half, low, high) for low, high in zip(edges[:-1], edges[1:])]
        )
        rows.append(
            IntensityRow(
                lam=float(lam),
                observed=tuple(int(x) for x in observed),
                expected_limit=tuple(float(x) for x in expected_limit),
                expected_exact=tuple(float(x) for x in expected_exact),
                chi2_limit=float(np.sum((observed - expected_limit) ** 2 / expected_limit)),
                chi2_exact=float(np.sum((observed - expected_exact) ** 2 / expected_exact)),
                dof=edges.size - 1,
            )
        )
    return rows


def _tail_fit(samples: np.ndarray, t_grid: np.ndarray, transform_t, transform_s) -> TailFit:
    survival = np.array([float(np.mean(samples >= t)) for t in t_grid]) if samples.size else np.zeros(t_grid.size)
    usable = (survival > 0.0) & (survival < 1.0)
    correlation = math.nan
    if np.count_nonzero(usable) >= 3:
        x = transform_t(t_grid[usable])
        y = transform_s(survival[usable])
        if np.ptp(x) > 0 and np.ptp(y) > 0:
            correlation = float(stats.pearsonr(x, y)[0])
    return TailFit(
        t_grid=tuple(float(t) for t in t_grid),
        survival=tuple(float(s) for s in survival),
        sample_count=int(samples.size),
        correlation=correlation,
    )


def _central_extremes(pts: LimitPointSet, bound: float) -> list[int]:
    fest = festoon(pts)
    return [index for index in fest.extreme_ids if np.all(np.abs(pts.v[index]) <= bound)]


def height_tail(
    dim: int,
    reps: int,
    seed: int,
    t_grid: Sequence[float],
    half_width: float | None = None,
    h_max: float = DEFAULT_H_MAX,
) -> TailFit:
    """Survival of H over extreme points in the eroded box; fitted as log(-log S) against t."""
    erosion = erosion_width(h_max)
    window = LimitWindow(erosion + 4.0 if half_width is None else half_width, h_max, dim - 1)
    bound = window.half_width - erosion
    heights = []
    for replicate in range(reps):
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _HEIGHT_STREAM))
        if pts.size == 0:
            continue
        fest = festoon(pts)
        for index in fest.extreme_ids:
            if np.all(np.abs(pts.v[index]) <= bound):
                heights.append(height_functional(pts, index, fest))
    return _tail_fit(np.asarray(heights), np.asarray(t_grid, dtype=float), lambda t: t, lambda s: np.log(-np.log(s)))


def localization_tail(
    dim: int,
    reps: int,
    seed: int,
    t_grid: Sequence[float],
    score_kind: str = "kface:0",
    per_replicate: int = 3,
    half_width: float | None = None,
    h_max: float = DEFAULT_H_MAX,
) -> TailFit:
    """Survival of the localization radius of central extreme points; fitted as -log S against t^2."""
    grid = np.asarray(t_grid, dtype=float)
    erosion = erosion_width(h_max)
    window = LimitWindow(erosion + float(grid[-1]) if half_width is None else half_width, h_max, dim - 1)
    bound = max(window.half_width - erosion, 1.0)
    radii = []
    for replicate in range(reps):
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _LOCALIZATION_STREAM))
        if pts.size == 0:
            continue
        central = sorted(_central_extremes(pts, bound), key=lambda i: float(np.linalg.norm(pts.v[i])))
        for index in central[:per_replicate]:
            radii.append(localization_radius(pts, index, score_kind, grid).radius)
    return _tail_fit(np.asarray(radii), grid, lambda t: t * t, lambda s: -np.log(s))


def mapped_extremes_check(
    lam: float,
    dim: int,
    seed: int,
    central_half_width: float = 2.0,
) -> MappedExtremes:
    """Hull vertices of P_lambda against extreme points of the mapped sample in a central window."""
    ctx = scaling_context(lam, dim)
    cloud = sample_poisson_gaussian(lam, dim, replicate_stream(seed, 0, _MAPPED_STREAM))
    v, h = scale_points(cloud.points, ctx)
    central = np.all(np.abs(v) <= central_half_width, axis=1)
    vertices = {index for index in convex_hull(cloud).vertex_ids if central[index]}

    margin = central_half_width + erosion_width(0.0)
    near = np.all(np.abs(v) <= margin, axis=1)
    window = LimitWindow(margin, float(h[near].max()) if near.any() else 0.0, dim - 1)
    mapped, kept = LimitPointSet(v=v, h=h, window=window).subset(near)
    extremes = {int(kept[index]) for index in extreme_points(mapped) if central[kept[index]]}
    disagreements = len(vertices ^ extremes)
    if disagreements:
        logger.info("Mapped extremes: %d disagreements among %d vertices", disagreements, len(vertices))
    return MappedExtremes(lam=float(lam), hull_vertices=len(vertices), disagreements=disagreements)


def truncation_audit(
    dim: int,
    half_width: float,
    reps: int,
    seed: int,
    h_max: float = DEFAULT_H_MAX,
) -> AuditResult:
    """Replicates whose eroded-box Ext or faces change when h_max is raised by 2."""
    window = LimitWindow(half_width, h_max + 2.0, dim - 1)
    changed = 0
    for replicate in range(reps):
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _AUDIT_STREAM))
        if pts.size and truncation_changed(pts, h_max):
            changed += 1
    return AuditResult(replicates=reps, changed=changed)


def shock_statistics(half_width: float, reps: int, seed: int, h_max: float = DEFAULT_H_MAX) -> ShockSummary:
    """Spacing statistics of festoon kinks and arc apices, d - 1 = 1."""
    window = LimitWindow(half_width, h_max, 1)
    kink_gaps, apex_gaps = [], []
    kinks = apices = 0
    for replicate in range(reps):
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _SHOCK_STREAM))
        shocks = shocks_2d(pts)
        kinks += shocks.kinks.shape[0]
        apices += shocks.arc_apices.shape[0]
        kink_gaps.extend(shocks.kink_spacings.tolist())
        apex_gaps.extend(shocks.apex_spacings.tolist())

    def moments(values: list[float]) -> tuple[float, float]:
        if len(values) < 2:
            return math.nan, math.nan
        data = np.asarray(values)
        return float(data.mean()), float(data.var(ddof=1))

    kink_mean, kink_var = moments(kink_gaps)
    apex_mean, apex_var = moments(apex_gaps)
    return ShockSummary(kinks, apices, kink_mean, kink_var, apex_mean, apex_var)

