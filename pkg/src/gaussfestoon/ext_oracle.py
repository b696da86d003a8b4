"""Brute-force extreme-point oracle that never builds a hull.

A point w0 is extreme when some down-paraboloid through it has no other
point in its interior. With apex abscissa ``a`` that is the linear system
``c_j - a . s_j >= 0`` over the other points, where ``s_j = v_j - v0`` and
``c_j = h_j - h0 + (|v_j|^2 - |v0|^2) / 2``; w0 is extreme when the system
has an interior solution.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import linprog

from .errors import InstanceTooLarge
from .models import LimitPointSet

logger = logging.getLogger(__name__)

MAX_ORACLE_POINTS = 50
ORACLE_SLACK = 1e-9


def _constraints(pts: LimitPointSet, index: int) -> tuple[np.ndarray, np.ndarray]:
    others = np.arange(pts.size) != index
    v0, h0 = pts.v[index], pts.h[index]
    shifts = pts.v[others] - v0
    levels = pts.h[others] - h0 + 0.5 * (np.sum(pts.v[others] ** 2, axis=1) - float(v0 @ v0))
    return shifts, levels


def _interval_feasible(shifts: np.ndarray, levels: np.ndarray) -> bool:
    slope = shifts[:, 0]
    if np.any((slope == 0.0) & (levels <= 0.0)):
        return False
    right = slope > 0.0
    left = slope < 0.0
    upper = float(np.min(levels[right] / slope[right])) if np.any(right) else np.inf
    lower = float(np.max(levels[left] / slope[left])) if np.any(left) else -np.inf
    return lower < upper


def _slack_feasible(shifts: np.ndarray, levels: np.ndarray) -> bool:
    m = shifts.shape[1]
    objective = np.zeros(m + 1)
    objective[-1] = -1.0
    bounds = [(None, None)] * m + [(None, 1.0)]
    result = linprog(
        objective,
        A_ub=np.column_stack([shifts, np.ones(shifts.shape[0])]),
        b_ub=levels,
        bounds=bounds,
        method="highs",
    )
    if result.status != 0:
        logger.warning("Oracle LP ended with status %d: %s", result.status, result.message)
        return False
    return -float(result.fun) > ORACLE_SLACK


def extreme_points_oracle(pts: LimitPointSet) -> frozenset[int]:
    if pts.size > MAX_ORACLE_POINTS:
        raise InstanceTooLarge(f"Oracle accepts at most {MAX_ORACLE_POINTS} points, got {pts.size}")
    if pts.size <= 1:
        return frozenset(range(pts.size))
    feasible = _interval_feasible if pts.spatial_dim == 1 else _slack_feasible
    return frozenset(index for index in range(pts.size) if feasible(*_constraints(pts, index)))
