from __future__ import annotations

from functools import lru_cache
import logging

import numpy as np

from .errors import OutOfRange
from .hull_core import DEFAULT_DIRECTION_BUDGET, facet_cone_solid_angle
from .models import InternalAngle, InternalAngleTable

logger = logging.getLogger(__name__)

MAX_SIMPLEX_DIM = 4
ANGLE_SEED = 20_240_101

_CLOSED_FORMS = {
    (0, 1): 0.5,
    (1, 2): 0.5,
    (0, 2): 1.0 / 6.0,
}


def _tangent_generators(k: int, m: int) -> np.ndarray:
    """Generators of the tangent cone at the face conv(e_0..e_k), in coordinates of its own span."""
    vertices = np.eye(m + 1)
    center = vertices[: k + 1].mean(axis=0)
    generators = vertices[k + 1 :] - center
    if k > 0:
        face_basis, _ = np.linalg.qr((vertices[1 : k + 1] - vertices[0]).T)
        generators = generators - (generators @ face_basis) @ face_basis.T
    span, _ = np.linalg.qr(generators.T)
    return generators @ span


@lru_cache(maxsize=None)
def internal_angle(
    k: int,
    d_minus_1: int,
    seed: int = ANGLE_SEED,
    directions: int = DEFAULT_DIRECTION_BUDGET,
) -> InternalAngle:
    """Normalised internal angle of the regular ``d_minus_1``-simplex at a k-face."""
    m = d_minus_1
    if not 0 <= k <= m or not 1 <= m <= MAX_SIMPLEX_DIM:
        raise OutOfRange(f"Internal angle needs 0 <= k <= d-1 <= {MAX_SIMPLEX_DIM}, got k={k}, d-1={m}")
    if (k, m) in _CLOSED_FORMS:
        return InternalAngle(value=_CLOSED_FORMS[(k, m)], std_error=0.0, provenance="closed-form")
    if k == m:
        return InternalAngle(value=1.0, std_error=0.0, provenance="closed-form")
    if m - k == 1:
        return InternalAngle(value=0.5, std_error=0.0, provenance="closed-form")

    rng = np.random.Generator(np.random.Philox(seed))
    angle = facet_cone_solid_angle(_tangent_generators(k, m), rng=rng, directions=directions)
    provenance = "monte-carlo" if angle.std_error > 0 else "exact-cone"
    logger.debug("beta_{%d,%d} = %.6g (%s)", k, m, angle.fraction, provenance)
    return InternalAngle(value=angle.fraction, std_error=angle.std_error, provenance=provenance)


def internal_angle_table(max_dim: int = MAX_SIMPLEX_DIM, seed: int = ANGLE_SEED) -> InternalAngleTable:
    if not 1 <= max_dim <= MAX_SIMPLEX_DIM:
        raise OutOfRange(f"max_dim must lie in [1, {MAX_SIMPLEX_DIM}]")
    return InternalAngleTable(
        entries={
            (k, m): internal_angle(k, m, seed)
            for m in range(1, max_dim + 1)
            for k in range(m + 1)
        }
    )
