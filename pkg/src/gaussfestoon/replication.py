"""Deterministic replicate engine.

Every replicate draws from ``rng.replicate_stream(seed, replicate, grid_index)``
and returns one flat row. Rows are folded in (grid_index, replicate) order, so
the table is the same for any worker count or execution order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
import logging
import math
from typing import Any, Callable

import numpy as np

from .errors import GaussFestoonError
from .gauss_model import (
    DEFAULT_KUBOTA_SUBSPACES,
    defect_volume_scores,
    intrinsic_volume,
    kface_scores,
    sample_binomial,
    sample_poisson_gaussian,
    scaling_context,
)
from .hull_core import convex_hull, face_lattice, polytope_volume
from .models import VOLUME_KIND, LimitWindow, PointCloud, ReplicationPlan, parse_score_kind
from .parabolic_limit import (
    DEFAULT_H_MAX,
    erosion_width,
    ext_window_counts,
    sample_limit_process,
    truncation_changed,
)
from .rng import replicate_stream
from .sphere_functions import resolve_sphere_function

logger = logging.getLogger(__name__)

Row = dict[str, Any]
BASE_COLUMNS = ("grid_index", "grid_value", "replicate", "error")


@dataclass(frozen=True, slots=True)
class ReplicateKind:
    columns: Callable[[ReplicationPlan], tuple[str, ...]]
    run: Callable[[float, np.random.Generator, ReplicationPlan], Row]


def _hull_columns(plan: ReplicationPlan) -> tuple[str, ...]:
    columns = ["point_count", *(f"f_{k}" for k in range(plan.dim)), "volume"]
    for k in plan.params.get("intrinsic_ks", ()):
        columns.extend([f"V_{k}", f"V_{k}_mc_var"])
    return tuple(columns)


def _hull_row(cloud: PointCloud, rng: np.random.Generator, plan: ReplicationPlan) -> Row:
    poly = convex_hull(cloud, rng)
    row: Row = {"point_count": cloud.size}
    for k, count in enumerate(face_lattice(poly).f_vector()):
        row[f"f_{k}"] = count
    row["volume"] = polytope_volume(poly, cloud)
    subspaces = int(plan.params.get("kubota_subspaces", DEFAULT_KUBOTA_SUBSPACES))
    for k in plan.params.get("intrinsic_ks", ()):
        estimate = intrinsic_volume(cloud, int(k), subspaces, rng, polytope=poly)
        row[f"V_{k}"] = estimate.value
        row[f"V_{k}_mc_var"] = estimate.mc_variance
    return row


def _binomial_hull(value: float, rng: np.random.Generator, plan: ReplicationPlan) -> Row:
    return _hull_row(sample_binomial(int(value), plan.dim, rng), rng, plan)


def _poisson_hull(value: float, rng: np.random.Generator, plan: ReplicationPlan) -> Row:
    return _hull_row(sample_poisson_gaussian(value, plan.dim, rng), rng, plan)


def _poisson_measure(value: float, rng: np.random.Generator, plan: ReplicationPlan) -> Row:
    """Sum of g(x / R) * score(x) over the sample, alongside the unweighted total."""
    d = plan.dim
    score_kind = str(plan.params.get("score", "kface:0"))
    g = resolve_sphere_function(str(plan.params.get("g", "one")), d)
    if plan.params.get("input_kind", "poisson") == "binomial":
        cloud = sample_binomial(int(value), d, rng)
    else:
        cloud = sample_poisson_gaussian(value, d, rng)
    ctx = scaling_context(value, d)
    poly = convex_hull(cloud, rng)
    family, k = parse_score_kind(score_kind)
    if family == VOLUME_KIND:
        records = defect_volume_scores(cloud, ctx, poly, rng=rng)
    else:
        records = kface_scores(cloud, int(k), poly)
    scores = np.array([record.value for record in records])
    weights = np.asarray(g(cloud.points / ctx.radius), dtype=float)
    return {
        "point_count": cloud.size,
        "measure": float(weights @ scores),
        "total": float(scores.sum()),
    }


def _limit_window(value: float, rng: np.random.Generator, plan: ReplicationPlan) -> Row:
    """Ext counts on the box of half-width ``value`` inside a wider sampling window."""
    m = plan.dim - 1
    h_max = float(plan.params.get("h_max", DEFAULT_H_MAX))
    margin = float(plan.params.get("margin", erosion_width(h_max)))
    audit = bool(plan.params.get("audit", False))
    sample_h_max = h_max + 2.0 if audit else h_max
    pts = sample_limit_process(LimitWindow(value + margin, sample_h_max, m), rng)
    changed = math.nan
    if audit:
        changed = float(truncation_changed(pts, h_max))
        pts, _ = pts.subset(pts.h <= h_max)
    local, restricted = ext_window_counts(pts, value)
    return {
        "point_count": pts.size,
        "ext_local": local,
        "ext_restricted": restricted,
        "truncation_changed": changed,
    }


REPLICATE_KINDS: dict[str, ReplicateKind] = {
    "binomial-hull": ReplicateKind(_hull_columns, _binomial_hull),
    "poisson-hull": ReplicateKind(_hull_columns, _poisson_hull),
    "poisson-measure": ReplicateKind(lambda plan: ("point_count", "measure", "total"), _poisson_measure),
    "limit-window": ReplicateKind(
        lambda plan: ("point_count", "ext_local", "ext_restricted", "truncation_changed"),
        _limit_window,
    ),
}


def replicate_columns(plan: ReplicationPlan) -> tuple[str, ...]:
    return BASE_COLUMNS + _kind(plan).columns(plan)


def _kind(plan: ReplicationPlan) -> ReplicateKind:
    try:
        return REPLICATE_KINDS[plan.functional_kind]
    except KeyError:
        raise ValueError(f"Unknown functional kind: {plan.functional_kind!r}") from None


def run_replicate(plan: ReplicationPlan, grid_index: int, replicate_index: int) -> Row:
    kind = _kind(plan)
    value = plan.grid[grid_index]
    row: Row = {"grid_index": grid_index, "grid_value": value, "replicate": replicate_index, "error": ""}
    rng = replicate_stream(plan.master_seed, replicate_index, grid_index)
    try:
        row.update(kind.run(value, rng, plan))
    except GaussFestoonError as exc:
        logger.info("Replicate %d at grid point %d failed: %s", replicate_index, grid_index, exc)
        row["error"] = type(exc).__name__
        row.update({column: math.nan for column in kind.columns(plan)})
    return row


def run_replications(plan: ReplicationPlan, workers: int = 1) -> list[Row]:
    if plan.replicate_count < 0:
        raise ValueError("replicate_count must be non-negative")
    _kind(plan)
    tasks = [(g, r) for g in range(len(plan.grid)) for r in range(plan.replicate_count)]
    if not tasks:
        return []
    logger.info(
        "Running %d replicates of %s over %d grid points on %d worker(s)",
        len(tasks),
        plan.functional_kind,
        len(plan.grid),
        workers,
    )
    grid_indices = [task[0] for task in tasks]
    replicate_indices = [task[1] for task in tasks]
    if workers <= 1:
        rows = [run_replicate(plan, g, r) for g, r in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run_replicate, repeat(plan), grid_indices, replicate_indices, chunksize=chunk))
    rows.sort(key=lambda row: (row["grid_index"], row["replicate"]))
    return rows


def column_values(rows: list[Row], column: str, grid_index: int | None = None) -> np.ndarray:
    """Finite values of ``column`` from rows without errors, optionally for one grid point."""
    values = [
        float(row[column])
        for row in rows
        if not row["error"] and (grid_index is None or row["grid_index"] == grid_index)
    ]
    data = np.asarray(values, dtype=float)
    return data[np.isfinite(data)]


def errored_fraction(rows: list[Row]) -> float:
    if not rows:
        return 0.0
    return sum(1 for row in rows if row["error"]) / len(rows)
