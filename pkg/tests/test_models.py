from __future__ import annotations

import numpy as np
import pytest

from gaussfestoon.errors import MissingBeta
from gaussfestoon.models import (
    Estimate,
    InternalAngle,
    InternalAngleTable,
    LimitPointSet,
    LimitWindow,
    PointCloud,
    kface_kind,
    parse_score_kind,
)


def test_parse_score_kind() -> None:
    assert parse_score_kind("volume") == ("volume", None)
    assert parse_score_kind(kface_kind(2)) == ("kface", 2)
    for bad in ("kface", "kface:x", "area"):
        with pytest.raises(ValueError):
            parse_score_kind(bad)


def test_point_cloud_rejects_duplicate_ids() -> None:
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 2)), ids=[1, 1])


def test_point_cloud_coords_follow_ids() -> None:
    cloud = PointCloud(np.array([[1.0, 2.0], [3.0, 4.0]]), ids=[7, 3])

    assert cloud.coords([3]).tolist() == [[3.0, 4.0]]
    assert cloud.row_of(7) == 0


def test_limit_window_area_and_expected_count() -> None:
    window = LimitWindow(half_width=2.0, h_max=0.0, spatial_dim=2)

    assert window.area == pytest.approx(16.0)
    assert window.expected_count == pytest.approx(16.0)
    with pytest.raises(ValueError):
        LimitWindow(half_width=0.0, h_max=0.0, spatial_dim=1)


def test_limit_point_set_insertions_and_subset() -> None:
    window = LimitWindow(1.0, 1.0, 1)
    pts = LimitPointSet(v=np.array([[0.1], [0.5]]), h=np.array([-1.0, 0.5]), window=window)
    grown = pts.with_insertions(np.array([[0.0]]), [0.9])

    assert grown.size == 3
    assert grown.inserted.tolist() == [False, False, True]

    subset, kept = grown.subset(grown.h > 0.0)
    assert kept.tolist() == [1, 2]
    assert subset.inserted.tolist() == [False, True]


def test_estimate_interval_overlap() -> None:
    first = Estimate.from_normal(1.0, 0.1, 10)
    second = Estimate.from_normal(1.3, 0.1, 10)
    third = Estimate.from_normal(2.0, 0.1, 10)

    assert first.ci95 == pytest.approx((1.0 - 0.196, 1.0 + 0.196))
    assert first.overlaps(second)
    assert not first.overlaps(third)


def test_internal_angle_table_lookup_missing() -> None:
    table = InternalAngleTable({(0, 1): InternalAngle(0.5, 0.0, "closed-form")})

    assert table.lookup(0, 1).value == 0.5
    with pytest.raises(MissingBeta):
        table.lookup(1, 5)
