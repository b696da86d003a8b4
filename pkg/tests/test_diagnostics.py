from __future__ import annotations

import numpy as np
import pytest

from gaussfestoon.diagnostics import (
    height_tail,
    intensity_check,
    intensity_ratio,
    localization_tail,
    mapped_extremes_check,
    paralem_scan,
    shock_statistics,
    truncation_audit,
)


def test_paralem_distances_shrink_with_lambda() -> None:
    rows = paralem_scan((1e4, 1e8), h1_values=(-1.0, 1.0), dim=2, points=51)

    assert len(rows) == 4
    by_key = {(row.lam, row.h1): row for row in rows}
    for h1 in (-1.0, 1.0):
        assert by_key[(1e8, h1)].scaled_distance < by_key[(1e4, h1)].scaled_distance


def test_paralem_in_three_dimensions() -> None:
    rows = paralem_scan((1e6,), h1_values=(0.0,), dim=3, points=41)

    assert len(rows) == 1
    assert rows[0].up_distance >= 0.0
    assert rows[0].radius > 1.0


def test_intensity_ratio_approaches_one_slowly() -> None:
    ratios = [intensity_ratio(lam, 2, np.zeros(1), 0.0) for lam in (1e4, 1e8, 1e16)]

    assert all(ratio > 1.0 for ratio in ratios)
    assert ratios[0] > ratios[1] > ratios[2]


def test_intensity_check_against_exact_intensity() -> None:
    (row,) = intensity_check((1e4,), 2, reps=20, seed=3)

    assert row.dof == 5
    assert len(row.observed) == len(row.expected_exact) == 5
    assert sum(row.observed) > 0
    assert row.p_value_exact > 1e-6


def test_height_tail_small_run() -> None:
    fit = height_tail(2, reps=10, seed=4, t_grid=(0.0, 0.5, 1.0, 1.5, 2.0), h_max=1.0)

    assert fit.sample_count > 0
    assert fit.monotone
    assert len(fit.survival) == 5


def test_localization_tail_small_run() -> None:
    fit = localization_tail(2, reps=3, seed=5, t_grid=(1.0, 2.0, 4.0, 8.0), h_max=1.0)

    assert 0 < fit.sample_count <= 9
    assert fit.monotone


def test_mapped_extremes_small_run() -> None:
    result = mapped_extremes_check(1e4, 2, seed=6)

    assert result.lam == 1e4
    assert result.rate == pytest.approx(result.disagreements / max(result.hull_vertices, 1))
    assert result.disagreements <= result.hull_vertices + 2


def test_truncation_audit_passes_with_deep_margin() -> None:
    audit = truncation_audit(2, 15.0, reps=5, seed=7, h_max=2.0)

    assert audit.replicates == 5
    assert audit.passed


def test_shock_statistics_count_faces_between_kinks() -> None:
    summary = shock_statistics(5.0, reps=4, seed=8, h_max=1.0)

    assert summary.kink_count - summary.apex_count == 4
    assert summary.kink_spacing_mean > 0.0
