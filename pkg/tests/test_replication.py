from __future__ import annotations

import math

import pytest

from gaussfestoon.models import ReplicationPlan
from gaussfestoon.replication import (
    BASE_COLUMNS,
    column_values,
    errored_fraction,
    replicate_columns,
    run_replicate,
    run_replications,
)


def test_hull_columns_include_requested_intrinsic_volumes() -> None:
    plan = ReplicationPlan(1, 2, (100.0,), "poisson-hull", 3, {"intrinsic_ks": (1,)})

    assert replicate_columns(plan) == BASE_COLUMNS + (
        "point_count",
        "f_0",
        "f_1",
        "f_2",
        "volume",
        "V_1",
        "V_1_mc_var",
    )


def test_rows_do_not_depend_on_worker_count() -> None:
    plan = ReplicationPlan(5, 3, (50.0, 100.0), "poisson-hull", 2)
    serial = run_replications(plan, workers=1)
    parallel = run_replications(plan, workers=2)

    assert len(serial) == 6
    assert [(row["grid_index"], row["replicate"]) for row in serial] == [(g, r) for g in range(2) for r in range(3)]
    assert serial == parallel


def test_single_replicate_matches_table_row() -> None:
    plan = ReplicationPlan(9, 2, (40.0,), "binomial-hull", 3)
    rows = run_replications(plan)

    assert run_replicate(plan, 0, 1) == rows[1]
    assert rows[0]["point_count"] == 40
    assert rows[0]["f_0"] - rows[0]["f_1"] + rows[0]["f_2"] == 2


def test_degenerate_replicates_are_recorded() -> None:
    plan = ReplicationPlan(3, 4, (2.0,), "binomial-hull", 2)
    rows = run_replications(plan)

    assert all(row["error"] == "DegenerateInput" for row in rows)
    assert all(math.isnan(row["f_0"]) for row in rows)
    assert errored_fraction(rows) == 1.0
    assert column_values(rows, "f_0").size == 0


def test_measure_rows_with_constant_weight() -> None:
    plan = ReplicationPlan(2, 3, (1e4,), "poisson-measure", 2, {"g": "one", "score": "kface:0"})
    rows = run_replications(plan)

    for row in rows:
        assert row["measure"] == pytest.approx(row["total"])
        assert row["total"] >= 3


def test_limit_window_rows_with_audit() -> None:
    plan = ReplicationPlan(4, 3, (2.0,), "limit-window", 2, {"h_max": 1.0, "margin": 2.0, "audit": True})
    rows = run_replications(plan)

    for row in rows:
        assert row["error"] == ""
        assert row["point_count"] > 0
        assert row["ext_local"] >= 1
        assert row["ext_restricted"] >= 0
        assert row["truncation_changed"] in (0.0, 1.0)


def test_column_values_by_grid_point() -> None:
    rows = [
        {"grid_index": 0, "error": "", "x": 1.0},
        {"grid_index": 1, "error": "", "x": 2.0},
        {"grid_index": 1, "error": "DegenerateInput", "x": math.nan},
        {"grid_index": 1, "error": "", "x": math.nan},
    ]

    assert column_values(rows, "x").tolist() == [1.0, 2.0]
    assert column_values(rows, "x", grid_index=1).tolist() == [2.0]
    assert errored_fraction(rows) == 0.25
    assert errored_fraction([]) == 0.0


def test_unknown_kind_rejected() -> None:
    with pytest.raises(ValueError):
        run_replications(ReplicationPlan(1, 1, (1.0,), "nope", 2))
