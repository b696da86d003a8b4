from __future__ import annotations

from collections.abc import Iterator
import json
from pathlib import Path

import pytest

from gaussfestoon.__main__ import main
from gaussfestoon.cli import EXIT_CONFIG, EXIT_DEGENERACY, EXIT_OK, run
from gaussfestoon.log_setup import reset_logger
from gaussfestoon.report_io import read_report, read_table


@pytest.fixture(autouse=True)
def _fresh_logger() -> Iterator[None]:
    reset_logger()
    yield
    reset_logger()


def test_simulate_writes_bundle(tmp_path: Path) -> None:
    code = run(["simulate", "--dim", "2", "--lambda", "200", "--reps", "3", "--seed", "1", "--out", str(tmp_path)])

    assert code == EXIT_OK
    bundle = tmp_path / "simulate"
    for name in ("replicates.csv", "replicates.schema.json", "scores.csv", "report.json", "config.json", "run.log"):
        assert (bundle / name).exists(), name
    replicates = read_table(bundle / "replicates.csv")
    assert len(replicates) == 3
    # score dump replays replicate 0
    scores = read_table(bundle / "scores.csv")
    assert sum(row["value"] for row in scores) == pytest.approx(replicates[0]["f_0"])
    assert json.loads((bundle / "config.json").read_text(encoding="utf-8"))["seed"] == 1


def test_missing_seed_is_a_config_error(tmp_path: Path) -> None:
    assert run(["simulate", "--dim", "2", "--lambda", "200", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_functional_is_a_config_error(tmp_path: Path) -> None:
    code = run(["estimate", "--dim", "3", "--functional", "kface:3", "--seed", "1", "--out", str(tmp_path)])

    assert code == EXIT_CONFIG


def test_config_file_values_are_used(tmp_path: Path) -> None:
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({"dim": 2, "lam": 150.0, "reps": 2, "seed": 5}), encoding="utf-8")

    code = run(["simulate", "--config", str(config_path), "--out", str(tmp_path)])

    assert code == EXIT_OK
    payload = read_report(tmp_path / "simulate" / "report.json")
    assert payload["config"]["lam"] == 150.0
    assert payload["rows"] == 2


def test_degenerate_replicates_exceed_budget(tmp_path: Path) -> None:
    code = run(["simulate", "--dim", "2", "--n", "2", "--reps", "4", "--seed", "1", "--out", str(tmp_path)])

    assert code == EXIT_DEGENERACY
    assert read_report(tmp_path / "simulate" / "report.json")["errored_fraction"] == 1.0


def test_limit_model_dumps_festoon_and_shocks(tmp_path: Path) -> None:
    code = run(
        [
            "limit-model",
            "--dim", "2",
            "--window-l", "3",
            "--hmax", "1",
            "--reps", "2",
            "--seed", "2",
            "--out", str(tmp_path),
        ]
    )

    assert code == EXIT_OK
    bundle = tmp_path / "limit-model"
    faces = read_table(bundle / "festoon_faces.csv")
    shocks = read_table(bundle / "shocks.csv")
    kinks = [row for row in shocks if row["list"] == "kink"]
    if faces:
        assert len(kinks) == len(faces) + 1
    assert all(row["h"] <= 1.0 for row in kinks)
    assert len(read_table(bundle / "replicates.csv")) == 2


def test_estimate_window_route(tmp_path: Path) -> None:
    code = run(
        [
            "estimate",
            "--dim", "2",
            "--route", "window",
            "--window-l", "2",
            "--hmax", "1",
            "--reps", "4",
            "--seed", "3",
            "--out", str(tmp_path),
        ]
    )

    assert code == EXIT_OK
    estimates = read_table(tmp_path / "estimate" / "estimates.csv")
    assert {(row["constant"], row["route"]) for row in estimates} == {
        ("E_2", "window"),
        ("N_2", "window"),
        ("F_0,2", "window"),
    }
    traces = read_table(tmp_path / "estimate" / "traces.csv")
    assert {row["constant"] for row in traces} == {"E_2", "N_2", "sigma2_window"}
    notes = {row["constant"]: row["note"] for row in estimates}
    assert "kappa_d" in notes["F_0,2"]


def test_estimate_limit_integral_route(tmp_path: Path) -> None:
    code = run(
        [
            "estimate",
            "--dim", "2",
            "--route", "limit-integral",
            "--hmax", "2",
            "--vmax", "2",
            "--reps", "6",
            "--seed", "4",
            "--out", str(tmp_path),
        ]
    )

    assert code == EXIT_OK
    payload = read_report(tmp_path / "estimate" / "report.json")
    routes = {(row["constant"], row["route"]) for row in payload["estimates"]}
    assert routes == {("E_2", "limit-integral")}
    sigma2 = payload["verdicts"]["sigma2"]
    assert sigma2["inconclusive"] is True
    assert sigma2["term2_support"] < 30


def test_estimate_direct_route_with_checks(tmp_path: Path) -> None:
    code = run(
        [
            "estimate",
            "--dim", "2",
            "--route", "direct",
            "--grid", "200,1000",
            "--reps", "4",
            "--seed", "5",
            "--out", str(tmp_path),
        ]
    )

    assert code == EXIT_OK
    verdicts = read_report(tmp_path / "estimate" / "report.json")["verdicts"]
    assert "gp_slope" in verdicts
    assert verdicts["measure"]["variance_ratio_target"] == pytest.approx(1.0)
    assert verdicts["internal_angles"]["0,1"]["value"] == pytest.approx(0.5)
    traces = read_table(tmp_path / "estimate" / "traces.csv")
    assert [row["grid_value"] for row in traces] == [200.0, 1000.0]


def test_diagnostics_selection(tmp_path: Path) -> None:
    code = run(
        [
            "diagnostics",
            "--dim", "2",
            "--diagnostics", "paralem,shocks",
            "--grid", "1e4,1e6",
            "--window-l", "4",
            "--hmax", "1",
            "--reps", "2",
            "--seed", "6",
            "--out", str(tmp_path),
        ]
    )

    assert code == EXIT_OK
    bundle = tmp_path / "diagnostics"
    assert len(read_table(bundle / "paralem.csv")) == 6
    assert "shocks" in read_report(bundle / "report.json")


def test_empty_diagnostics_selection(tmp_path: Path) -> None:
    assert main(["diagnostics", "--seed", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert read_report(tmp_path / "diagnostics" / "report.json")["selected"] == []


def test_diagnostics_usage_errors(tmp_path: Path) -> None:
    normality = ["diagnostics", "--diagnostics", "normality", "--reps", "5", "--seed", "1", "--out", str(tmp_path)]
    shocks = ["diagnostics", "--dim", "3", "--diagnostics", "shocks", "--seed", "1", "--out", str(tmp_path)]

    assert run(normality) == EXIT_CONFIG
    assert run(shocks) == EXIT_CONFIG


def test_report_rereads_bundles(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(["simulate", "--dim", "2", "--lambda", "200", "--reps", "2", "--seed", "1", "--out", str(tmp_path)]) == EXIT_OK
    capsys.readouterr()

    assert run(["report", "--out", str(tmp_path)]) == EXIT_OK
    output = capsys.readouterr().out
    assert "[simulate]" in output
    assert "replicates.csv: 2 rows" in output

    (tmp_path / "simulate" / "replicates.csv").write_text("broken\n", encoding="utf-8")
    assert run(["report", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_report_rebuilds_the_dumped_festoon(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    args = ["limit-model", "--dim", "2", "--window-l", "4", "--hmax", "2", "--reps", "1", "--seed", "6"]
    assert run([*args, "--out", str(tmp_path)]) == EXIT_OK
    report_path = tmp_path / "limit-model" / "report.json"
    recorded = read_report(report_path)["extreme_count"]
    capsys.readouterr()

    assert run(["report", "--out", str(tmp_path)]) == EXIT_OK
    assert f"{recorded} extreme points" in capsys.readouterr().out

    payload = json.loads(report_path.read_text(encoding="utf-8"))
    payload["extreme_count"] = recorded + 1
    report_path.write_text(json.dumps(payload), encoding="utf-8")
    assert run(["report", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_rerun_gives_identical_numeric_tables(tmp_path: Path) -> None:
    args = ["simulate", "--dim", "3", "--lambda", "300", "--reps", "3", "--seed", "9"]

    assert run([*args, "--out", str(tmp_path / "first")]) == EXIT_OK
    assert run([*args, "--out", str(tmp_path / "second"), "--workers", "2"]) == EXIT_OK

    for name in ("replicates.csv", "scores.csv"):
        first = (tmp_path / "first" / "simulate" / name).read_bytes()
        second = (tmp_path / "second" / "simulate" / name).read_bytes()
        assert first == second, name
