from __future__ import annotations

import argparse
from dataclasses import asdict
import logging
from pathlib import Path
import sys
from typing import Any, Sequence

import numpy as np

from .config import COMMANDS, RunConfig, build_run_config, load_run_config
from .diagnostics import (
    TRUNCATION_RATE_LIMIT,
    height_tail,
    intensity_check,
    intensity_ratio,
    localization_tail,
    mapped_extremes_check,
    paralem_scan,
    shock_statistics,
    truncation_audit,
)
from .errors import (
    ConfigError,
    DegeneracyBudgetExceeded,
    GaussFestoonError,
    MissingBeta,
    OutOfRange,
    SchemaError,
    TruncationDominates,
)
from .estimators import (
    ed_nd_estimator,
    expectation_gp_check,
    Sigma2Result,
    intrinsic_expect_check,
    mainexpect_check,
    palm_mean_integral,
    scaled_variance_trace,
    sigma2_estimator,
    th5_measure_check,
    variance_constant_from_sigma2,
)
from .gauss_model import defect_volume_scores, kface_scores, sample_binomial, sample_poisson_gaussian, scaling_context
from .internal_angles import MAX_SIMPLEX_DIM, internal_angle_table
from .log_setup import build_logger
from .models import VOLUME_KIND, ConstantsReport, Estimate, LimitWindow, ReplicationPlan, RoutedEstimate, parse_score_kind
from .parabolic_limit import festoon, limit_defect_volume_scores, limit_kface_scores, sample_limit_process, shocks_2d
from .replication import BASE_COLUMNS, Row, column_values, errored_fraction, replicate_columns, run_replications
from .report_io import (
    FESTOON_SCHEMA,
    TableSchema,
    festoon_from_rows,
    festoon_rows,
    read_report,
    read_table,
    schema_for_rows,
    save_run_config,
    write_report,
    write_table,
)
from .rng import auxiliary_stream, replicate_stream
from .statistics import normality_diagnostics, route_consistency

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERACY = 3
EXIT_TRUNCATION = 4

DEFAULT_LAMBDA_GRID = (1e3, 1e4, 1e5, 1e6)
DEFAULT_PARALEM_GRID = (1e4, 1e5, 1e6, 1e7, 1e8)
DEFAULT_T_GRID = tuple(float(t) for t in np.linspace(0.5, 4.0, 8))
DEFAULT_LOCALIZATION_GRID = tuple(float(t) for t in np.linspace(1.0, 8.0, 8))

SCORE_SCHEMA = TableSchema(
    name="scores",
    columns=(
        ("grid_index", "int"),
        ("vertex_id", "int"),
        ("kind", "str"),
        ("value", "float"),
        ("count", "int"),
        ("censored", "bool"),
    ),
)
ESTIMATE_SCHEMA = TableSchema(
    name="estimates",
    columns=(
        ("constant", "str"),
        ("route", "str"),
        ("value", "float"),
        ("std_error", "float"),
        ("ci_low", "float"),
        ("ci_high", "float"),
        ("replicate_count", "int"),
        ("censored_count", "int"),
        ("note", "str"),
    ),
)
TRACE_SCHEMA = TableSchema(
    name="traces",
    columns=(
        ("constant", "str"),
        ("grid_value", "float"),
        ("value", "float"),
        ("std_error", "float"),
        ("scale", "float"),
        ("replicate_count", "int"),
    ),
)


def _bundle_dir(config: RunConfig) -> Path:
    return Path(config.out) / config.command


def _write_replicates(path: Path, plan: ReplicationPlan, rows: list[Row], config: RunConfig) -> None:
    sample = next((row for row in rows if not row["error"]), rows[0] if rows else None)
    schema = schema_for_rows("replicates", replicate_columns(plan), sample)
    write_table(path, rows, schema, config)


def _check_degeneracy(rows: list[Row], config: RunConfig) -> None:
    fraction = errored_fraction(rows)
    if fraction > config.degeneracy_budget:
        raise DegeneracyBudgetExceeded(
            f"{fraction:.1%} of replicates failed, above the budget of {config.degeneracy_budget:.1%}"
        )


def cmd_simulate(config: RunConfig) -> dict[str, Any]:
    binomial = config.n is not None or config.input_kind == "binomial"
    if config.grid:
        grid = config.grid
    elif binomial and config.n is not None:
        grid = (float(config.n),)
    elif config.lam is not None:
        grid = (config.lam,)
    else:
        raise ConfigError("--n", "simulate needs --n, --lambda or --grid")
    kind = "binomial-hull" if binomial else "poisson-hull"
    plan = ReplicationPlan(config.seed, config.reps, tuple(grid), kind, config.dim)
    rows = run_replications(plan, config.workers)
    bundle = _bundle_dir(config)
    _write_replicates(bundle / "replicates.csv", plan, rows, config)

    family, k = parse_score_kind(config.functional)
    score_rows: list[dict[str, Any]] = []
    for grid_index, value in enumerate(grid):
        if config.reps == 0:
            break
        # replays the sample of replicate 0
        rng = replicate_stream(config.seed, 0, grid_index)
        cloud = sample_binomial(int(value), config.dim, rng) if binomial else sample_poisson_gaussian(value, config.dim, rng)
        try:
            if family == VOLUME_KIND:
                records = defect_volume_scores(cloud, scaling_context(value, config.dim), rng=rng)
            else:
                records = kface_scores(cloud, int(k))
        except GaussFestoonError as exc:
            logger.info("Scores skipped at grid point %d: %s", grid_index, exc)
            continue
        score_rows.extend({"grid_index": grid_index, **asdict(record)} for record in records)
    write_table(bundle / "scores.csv", score_rows, SCORE_SCHEMA, config)

    means: dict[str, list[float | None]] = {}
    for column in replicate_columns(plan)[len(BASE_COLUMNS):]:
        values = [column_values(rows, column, g) for g in range(len(grid))]
        means[column] = [float(v.mean()) if v.size else None for v in values]
    summary = {
        "command": "simulate",
        "functional_kind": kind,
        "rows": len(rows),
        "errored_fraction": errored_fraction(rows),
        "means": means,
    }
    write_report(bundle / "report.json", summary, config)
    _check_degeneracy(rows, config)
    return summary


def cmd_limit_model(config: RunConfig) -> dict[str, Any]:
    grid = config.grid or (config.window_l,)
    plan = ReplicationPlan(
        config.seed,
        config.reps,
        tuple(grid),
        "limit-window",
        config.dim,
        {"h_max": config.hmax, "audit": config.audit},
    )
    rows = run_replications(plan, config.workers)
    bundle = _bundle_dir(config)
    _write_replicates(bundle / "replicates.csv", plan, rows, config)

    window = LimitWindow(config.window_l, config.hmax, config.dim - 1)
    pts = sample_limit_process(window, auxiliary_stream(config.seed, 0))
    summary: dict[str, Any] = {"command": "limit-model", "rows": len(rows), "sample_size": pts.size}
    if pts.size:
        fest = festoon(pts)
        write_table(bundle / "festoon_faces.csv", festoon_rows(fest), FESTOON_SCHEMA, config)
        family, k = parse_score_kind(config.functional)
        if family == VOLUME_KIND:
            records = limit_defect_volume_scores(pts, fest, positive_part=config.positive_part)
        else:
            records = limit_kface_scores(pts, int(k), fest)
        score_rows = [{"grid_index": 0, **asdict(record)} for record in records]
        write_table(bundle / "scores.csv", score_rows, SCORE_SCHEMA, config)
        summary["extreme_count"] = len(fest.extreme_ids)
        summary["censored_scores"] = sum(1 for record in records if record.censored)
        if config.dim == 2:
            shocks = shocks_2d(pts, fest)
            shock_rows = [{"list": "kink", "v": float(v), "h": float(h)} for v, h in shocks.kinks]
            shock_rows += [{"list": "apex", "v": float(v), "h": float(h)} for v, h in shocks.arc_apices]
            shock_schema = TableSchema("shocks", (("list", "str"), ("v", "float"), ("h", "float")))
            write_table(bundle / "shocks.csv", shock_rows, shock_schema, config)

    exit_code = EXIT_OK
    if config.audit:
        changed = column_values(rows, "truncation_changed")
        rate = float(changed.mean()) if changed.size else 0.0
        summary["truncation_change_rate"] = rate
        if rate > TRUNCATION_RATE_LIMIT:
            exit_code = EXIT_TRUNCATION
    write_report(bundle / "report.json", summary, config)
    _check_degeneracy(rows, config)
    summary["exit_code"] = exit_code
    return summary


def _trace_rows(constant: str, trace) -> list[dict[str, Any]]:
    return [
        {
            "constant": constant,
            "grid_value": point.grid_value,
            "value": point.estimate.value,
            "std_error": point.estimate.std_error,
            "scale": point.scale,
            "replicate_count": point.estimate.replicate_count,
        }
        for point in trace
    ]


def _estimate_row(item: RoutedEstimate) -> dict[str, Any]:
    return {
        "constant": item.constant,
        "route": item.route,
        "value": item.estimate.value,
        "std_error": item.estimate.std_error,
        "ci_low": item.estimate.ci95[0],
        "ci_high": item.estimate.ci95[1],
        "replicate_count": item.estimate.replicate_count,
        "censored_count": item.estimate.censored_count,
        "note": item.note,
    }


def cmd_estimate(config: RunConfig) -> ConstantsReport:
    d = config.dim
    family, k = parse_score_kind(config.functional)
    routes = {"direct", "limit-integral", "window"} if config.route == "all" else {config.route}
    grid = config.grid or DEFAULT_LAMBDA_GRID
    report = ConstantsReport(dim=d)
    constant = f"V_{d}" if family == VOLUME_KIND else f"F_{k},{d}"
    truncation: TruncationDominates | None = None
    palm: Estimate | None = None
    sigma2: Sigma2Result | None = None

    if "direct" in routes:
        params: dict[str, Any] = {}
        if family == VOLUME_KIND and 1 <= config.k < d:
            params = {"intrinsic_ks": (config.k,), "kubota_subspaces": config.kubota_subspaces}
        plan = ReplicationPlan(config.seed, config.reps, tuple(grid), "poisson-hull", d, params)
        rows = run_replications(plan, config.workers)
        _check_degeneracy(rows, config)
        statistic = "volume" if family == VOLUME_KIND else f"f_{k}"
        trace = scaled_variance_trace(rows, statistic, d, grid)
        report.traces[constant] = trace
        report.estimates.append(RoutedEstimate(constant, "direct", trace[-1].estimate, f"top of grid {grid[-1]:g}"))
        if family == VOLUME_KIND:
            expectation = mainexpect_check(d, grid, config.reps, config.seed, config.workers)
            report.verdicts["mainexpect"] = [asdict(point) | {"gap": point.gap} for point in expectation]
            if params:
                vk = f"v_{config.k}"
                vk_trace = scaled_variance_trace(rows, f"V_{config.k}", d, grid)
                report.traces[vk] = vk_trace
                report.estimates.append(RoutedEstimate(vk, "direct", vk_trace[-1].estimate, "positivity not asserted"))
                intrinsic = intrinsic_expect_check(d, config.k, grid, config.reps, config.seed, config.workers, config.kubota_subspaces)
                report.verdicts["intrinsic_expect"] = [asdict(point) | {"gap": point.gap} for point in intrinsic]
        elif len(grid) < 2:
            logger.info("Skipping the expectation slope check on a single grid point")
        else:
            angles = internal_angle_table(min(d - 1, MAX_SIMPLEX_DIM))
            gp = expectation_gp_check(d, int(k), [int(n) for n in grid], config.reps, config.seed, config.workers, angles)
            report.verdicts["gp_slope"] = asdict(gp)
            report.verdicts["internal_angles"] = {f"{face},{m}": asdict(beta) for (face, m), beta in sorted(angles.entries.items())}

    if "limit-integral" in routes:
        try:
            sigma2 = sigma2_estimator(
                config.functional,
                d,
                config.reps,
                config.seed,
                h_max=config.hmax,
                h_cap=config.hcap,
                v_max=config.vmax,
                positive_part=config.positive_part,
            )
        except TruncationDominates as exc:
            truncation = exc
            sigma2 = exc.result
        if sigma2.inconclusive:
            logger.warning(
                "Not reporting %s from the limit integral: %d/%d nonzero samples",
                constant,
                sigma2.term1_support,
                sigma2.term2_support,
            )
        else:
            report.estimates.append(
                RoutedEstimate(constant, "limit-integral", variance_constant_from_sigma2(sigma2.total, d), "sigma^2 * d * kappa_d")
            )
        report.verdicts["sigma2"] = asdict(sigma2) | {"inconclusive": sigma2.inconclusive}
        if family != VOLUME_KIND and k == 0:
            palm = palm_mean_integral(config.functional, d, config.reps, config.seed, h_max=config.hmax, h_cap=config.hcap)
            report.estimates.append(RoutedEstimate(f"E_{d}", "limit-integral", palm, "Palm mean of the extreme indicator"))

    if "direct" in routes:
        measure = th5_measure_check(
            config.g,
            config.functional,
            d,
            grid,
            config.reps,
            config.seed,
            config.input_kind,
            config.workers,
            palm_mean=palm,
            sigma2=None if sigma2 is None or sigma2.inconclusive else sigma2.total,
        )
        report.verdicts["measure"] = asdict(measure) | {"variance_ratio_target": measure.variance_ratio_target}

    if "window" in routes and family != VOLUME_KIND and k == 0:
        widths = (config.window_l / 4.0, config.window_l / 2.0, config.window_l)
        window = ed_nd_estimator(d, widths, config.reps, config.seed, config.hmax, config.workers, audit=config.audit)
        if config.audit:
            report.verdicts["window_truncation_change_rate"] = window.truncation_change_rate
            if window.truncation_change_rate > TRUNCATION_RATE_LIMIT:
                truncation = TruncationDominates(
                    f"Truncation changed the extreme set in {window.truncation_change_rate:.2%} of windows"
                )
        report.traces[f"E_{d}"] = list(window.mean_trace)
        report.traces[f"N_{d}"] = list(window.variance_trace)
        report.traces["sigma2_window"] = list(window.restricted_variance_trace)
        report.estimates.append(RoutedEstimate(f"E_{d}", "window", window.e_d))
        report.estimates.append(RoutedEstimate(f"N_{d}", "window", window.n_d, "sigma^2 of card Ext(P ∩ Q)"))
        report.estimates.append(
            RoutedEstimate(
                constant,
                "window",
                variance_constant_from_sigma2(window.sigma2, d),
                "sigma^2 of card(Ext(P) ∩ Q) * d * kappa_d",
            )
        )

    for name in {item.constant for item in report.estimates}:
        verdict = route_consistency(name, report.estimates)
        if verdict.overlaps:
            report.verdicts[f"consistency:{name}"] = {
                "consistent": verdict.consistent,
                "pairs": {f"{a}|{b}": ok for (a, b), ok in sorted(verdict.overlaps.items())},
            }

    bundle = _bundle_dir(config)
    write_table(bundle / "estimates.csv", [_estimate_row(item) for item in report.estimates], ESTIMATE_SCHEMA, config)
    trace_rows = [row for name, trace in sorted(report.traces.items()) for row in _trace_rows(name, trace)]
    write_table(bundle / "traces.csv", trace_rows, TRACE_SCHEMA, config)
    write_report(
        bundle / "report.json",
        {
            "command": "estimate",
            "estimates": [_estimate_row(item) for item in report.estimates],
            "verdicts": report.verdicts,
        },
        config,
    )
    if truncation is not None:
        raise truncation
    return report


def cmd_diagnostics(config: RunConfig) -> dict[str, Any]:
    d = config.dim
    bundle = _bundle_dir(config)
    summary: dict[str, Any] = {"command": "diagnostics", "selected": list(config.diagnostics)}
    exit_code = EXIT_OK
    for name in config.diagnostics:
        logger.info("Running diagnostic %s", name)
        if name == "paralem":
            rows = [asdict(row) | {"scaled_distance": row.scaled_distance} for row in paralem_scan(config.grid or DEFAULT_PARALEM_GRID, dim=d)]
            write_table(bundle / "paralem.csv", rows, schema_for_rows("paralem", rows[0].keys(), rows[0]), config)
        elif name == "intensity":
            grid = config.grid or DEFAULT_PARALEM_GRID
            checks = intensity_check(grid, d, config.reps, config.seed)
            rows = [
                {
                    "lam": row.lam,
                    "chi2_limit": row.chi2_limit,
                    "chi2_exact": row.chi2_exact,
                    "p_value_exact": row.p_value_exact,
                    "dof": row.dof,
                    "ratio_at_origin": intensity_ratio(row.lam, d, np.zeros(d - 1), 0.0),
                }
                for row in checks
            ]
            write_table(bundle / "intensity.csv", rows, schema_for_rows("intensity", rows[0].keys(), rows[0]), config)
        elif name in {"height-tail", "localization-tail"}:
            if name == "height-tail":
                fit = height_tail(d, config.reps, config.seed, DEFAULT_T_GRID, h_max=config.hmax)
            else:
                fit = localization_tail(d, config.reps, config.seed, DEFAULT_LOCALIZATION_GRID, h_max=config.hmax)
            rows = [{"t": t, "survival": s} for t, s in zip(fit.t_grid, fit.survival)]
            table = name.replace("-", "_")
            write_table(bundle / f"{table}.csv", rows, TableSchema(table, (("t", "float"), ("survival", "float"))), config)
            summary[name] = {"correlation": fit.correlation, "monotone": fit.monotone, "consistent": fit.consistent}
        elif name == "mapped-extremes":
            result = mapped_extremes_check(config.lam or 1e6, d, config.seed)
            summary[name] = asdict(result) | {"rate": result.rate}
        elif name == "truncation":
            audit = truncation_audit(d, config.window_l, config.reps, config.seed, config.hmax)
            summary[name] = asdict(audit) | {"rate": audit.rate, "passed": audit.passed}
            if not audit.passed:
                exit_code = EXIT_TRUNCATION
        elif name == "normality":
            if config.reps < 100:
                raise ConfigError("--reps", "normality diagnostics need at least 100 replicates")
            lam = config.lam or (config.grid[-1] if config.grid else 1e5)
            plan = ReplicationPlan(config.seed, config.reps, (lam,), "poisson-hull", d)
            rows = run_replications(plan, config.workers)
            report = normality_diagnostics(column_values(rows, "f_0"))
            summary[name] = asdict(report)
        elif name == "shocks":
            if d != 2:
                raise ConfigError("--dim", "shock statistics need --dim 2")
            summary[name] = asdict(shock_statistics(config.window_l, config.reps, config.seed, config.hmax))
    write_report(bundle / "report.json", summary, config)
    summary["exit_code"] = exit_code
    return summary


def _reload_festoon(path: Path, payload: dict[str, Any]) -> dict[str, int]:
    """Rebuild the dumped festoon and check it against the recorded extreme count."""
    dim = (payload.get("config") or {}).get("dim")
    if not isinstance(dim, int):
        raise SchemaError(f"{path}: report carries no dimension")
    fest = festoon_from_rows(read_table(path), spatial_dim=dim - 1)
    recorded = payload.get("extreme_count")
    if fest.faces and recorded is not None and recorded != len(fest.extreme_ids):
        raise SchemaError(f"{path}: {len(fest.extreme_ids)} extreme points on the faces, report says {recorded}")
    print(f"  festoon: {len(fest.faces)} faces, {len(fest.extreme_ids)} extreme points")
    return {"faces": len(fest.faces), "extreme_points": len(fest.extreme_ids)}


def cmd_report(config: RunConfig) -> dict[str, Any]:
    """Re-read every bundle under ``--out``, validating tables against their schemas."""
    root = Path(config.out)
    rendered: dict[str, Any] = {}
    for command in COMMANDS:
        report_path = root / command / "report.json"
        if not report_path.exists():
            continue
        payload = read_report(report_path)
        tables = {path.name: len(read_table(path)) for path in sorted((root / command).glob("*.csv"))}
        rendered[command] = {"tables": tables, "provenance": payload.get("provenance")}
        print(f"[{command}] config {(payload['provenance'].get('config_hash') or '')[:12]}")
        for table, count in tables.items():
            print(f"  {table}: {count} rows")
        for row in payload.get("estimates", []):
            print(f"  {row['constant']} [{row['route']}] = {row['value']} ± {row['std_error']}")
        for name, verdict in sorted(payload.get("verdicts", {}).items()):
            if name.startswith("consistency:"):
                print(f"  {name} consistent={verdict['consistent']}")
        faces_path = root / command / "festoon_faces.csv"
        if faces_path.exists():
            rendered[command]["festoon"] = _reload_festoon(faces_path, payload)
    return rendered


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON key-value run config")
    parser.add_argument("--dim", type=int, default=None)
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)
    parser.add_argument("--grid", type=str, default=None, help="comma separated, increasing")
    parser.add_argument("--reps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--window-l", dest="window_l", type=float, default=None)
    parser.add_argument("--hmax", type=float, default=None)
    parser.add_argument("--hcap", type=float, default=None)
    parser.add_argument("--vmax", type=float, default=None)
    parser.add_argument("--route", type=str, default=None)
    parser.add_argument("--functional", type=str, default=None, help="kface:<k> or volume")
    parser.add_argument("--k", type=int, default=None)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--audit", action="store_true", default=None)
    parser.add_argument("--positive-part", dest="positive_part", action="store_true", default=None)
    parser.add_argument("--diagnostics", type=str, default=None, help="comma separated diagnostic names")
    parser.add_argument("--degeneracy-budget", dest="degeneracy_budget", type=float, default=None)
    parser.add_argument("--g", type=str, default=None)
    parser.add_argument("--input-kind", dest="input_kind", type=str, default=None)
    parser.add_argument("--kubota-subspaces", dest="kubota_subspaces", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussfestoon", description="Gaussian polytopes and their festoon limit.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        _add_common_flags(subparsers.add_parser(command))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = vars(args).copy()
    config_path = values.pop("config", None)
    file_values = load_run_config(config_path) if config_path is not None else {}
    file_values = {key: value for key, value in file_values.items() if key != "command"}
    return build_run_config(file_values, values)


_HANDLERS = {
    "simulate": cmd_simulate,
    "limit-model": cmd_limit_model,
    "estimate": cmd_estimate,
    "diagnostics": cmd_diagnostics,
    "report": cmd_report,
}


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    bundle = _bundle_dir(config)
    run_logger = build_logger(bundle)
    if config.command != "report":
        saved, message = save_run_config(config, bundle / "config.json")
        if not saved:
            run_logger.warning("%s", message)
    run_logger.info("Starting %s with seed %s", config.command, config.seed)
    try:
        result = _HANDLERS[config.command](config)
    except (ConfigError, MissingBeta, OutOfRange, SchemaError, ValueError) as exc:
        run_logger.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyBudgetExceeded as exc:
        run_logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except TruncationDominates as exc:
        run_logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRUNCATION
    exit_code = int(result.get("exit_code", EXIT_OK)) if isinstance(result, dict) else EXIT_OK
    run_logger.info("Finished %s with exit code %d", config.command, exit_code)
    return exit_code
