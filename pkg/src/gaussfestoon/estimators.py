from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import MissingBeta, TruncationDominates
from .gauss_model import unit_ball_volume
from .internal_angles import MAX_SIMPLEX_DIM, internal_angle
from .models import (
    VOLUME_KIND,
    Estimate,
    InternalAngle,
    InternalAngleTable,
    LimitPointSet,
    LimitWindow,
    ReplicationPlan,
    TracePoint,
    parse_score_kind,
)
from .parabolic_limit import (
    DEFAULT_H_MAX,
    erosion_width,
    festoon,
    limit_defect_volume_scores,
    limit_kface_scores,
    sample_limit_process,
)
from .replication import Row, column_values, run_replications
from .rng import replicate_stream
from .sphere_functions import resolve_sphere_function, sphere_area, sphere_integral
from .statistics import jackknife_variance, mean_estimate, variance_estimate

logger = logging.getLogger(__name__)

DEFAULT_V_MAX = 8.0
SHELL_FRACTION = 0.1
SHELL_TOLERANCE = 0.05
MIN_TERM_SUPPORT = 30

# stream grid indices kept apart from replication plans
_TERM1_STREAM = 1_000
_JOINT_STREAM = 1_001
_FIRST_SINGLE_STREAM = 1_002
_SECOND_SINGLE_STREAM = 1_003
_PALM_MEAN_STREAM = 1_004


@dataclass(frozen=True, slots=True)
class GPCheck:
    dim: int
    k: int
    beta: InternalAngle
    target_slope: float
    slope: float
    slope_se: float
    intercept: float
    means: tuple[Estimate, ...]


@dataclass(frozen=True, slots=True)
class ExpectationPoint:
    grid_value: float
    measured: Estimate
    predicted: float

    @property
    def gap(self) -> float:
        return self.measured.value - self.predicted


@dataclass(frozen=True, slots=True)
class Sigma2Result:
    total: Estimate
    term1: Estimate
    term2: Estimate
    shell_contribution: float
    shell_std_error: float
    term1_support: int = 0
    term2_support: int = 0

    @property
    def inconclusive(self) -> bool:
        """Fewer than MIN_TERM_SUPPORT nonzero samples in either term; lower --hcap to fix."""
        return min(self.term1_support, self.term2_support) < MIN_TERM_SUPPORT


@dataclass(frozen=True, slots=True)
class EdNdResult:
    mean_trace: tuple[TracePoint, ...]
    variance_trace: tuple[TracePoint, ...]
    restricted_trace: tuple[TracePoint, ...]
    restricted_variance_trace: tuple[TracePoint, ...]
    e_d: Estimate
    n_d: Estimate
    # Var card(Ext(P) ∩ Q) / vol(Q) at the widest box
    sigma2: Estimate
    truncation_change_rate: float = math.nan


@dataclass(frozen=True, slots=True)
class Th5Point:
    grid_value: float
    mean: Estimate
    variance: Estimate
    total_variance: Estimate


@dataclass(slots=True)
class Th5Check:
    g: str
    score_kind: str
    g_integral: float
    g2_integral: float
    sphere_area: float
    points: list[Th5Point] = field(default_factory=list)
    predicted_mean: float | None = None
    predicted_variance: float | None = None

    @property
    def variance_ratio_target(self) -> float:
        return self.g2_integral / self.sphere_area


def variance_exponent(statistic: str, dim: int) -> float:
    """p in Var(statistic) / (2 log x)^p for f_k, volume and V_k columns."""
    if statistic.startswith("f_"):
        return (dim - 1) / 2.0
    if statistic == "volume":
        return (dim - 3) / 2.0
    if statistic.startswith("V_"):
        k = int(statistic[2:])
        return k - (dim + 3) / 2.0
    raise ValueError(f"Unknown statistic: {statistic!r}")


def scaled_variance_trace(
    rows: list[Row],
    statistic: str,
    dim: int,
    grid: Sequence[float],
) -> list[TracePoint]:
    """Var(statistic) / (2 log x)^p per grid point, jackknife standard errors.

    For ``V_k`` the mean within-replicate Kubota variance is subtracted first.
    """
    if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
        raise ValueError("grid must be increasing")
    exponent = variance_exponent(statistic, dim)
    trace = []
    for index, value in enumerate(grid):
        samples = column_values(rows, statistic, index)
        scale = (2.0 * math.log(value)) ** exponent
        variance, std_error = jackknife_variance(samples)
        if statistic.startswith("V_"):
            variance -= float(column_values(rows, f"{statistic}_mc_var", index).mean())
        trace.append(
            TracePoint(
                grid_value=float(value),
                estimate=Estimate.from_normal(variance / scale, std_error / scale, samples.size),
                scale=scale,
            )
        )
    return trace


def _beta(k: int, dim: int, table: InternalAngleTable | None) -> InternalAngle:
    if table is not None:
        return table.lookup(k, dim - 1)
    if dim - 1 > MAX_SIMPLEX_DIM:
        raise MissingBeta(f"No internal angle tabulated for k={k}, d-1={dim - 1}")
    return internal_angle(k, dim - 1)


def gp_target_slope(dim: int, k: int, beta: float) -> float:
    """Slope of E f_k against (log n)^((d-1)/2)."""
    return 2.0**dim / math.sqrt(dim) * math.comb(dim, k + 1) * beta * math.pi ** ((dim - 1) / 2.0)


def expectation_gp_check(
    dim: int,
    k: int,
    n_grid: Sequence[int],
    reps: int,
    seed: int,
    workers: int = 1,
    table: InternalAngleTable | None = None,
) -> GPCheck:
    beta = _beta(k, dim, table)
    if len(n_grid) < 2:
        raise ValueError("The regression needs at least two grid points")
    plan = ReplicationPlan(seed, reps, tuple(float(n) for n in n_grid), "binomial-hull", dim)
    rows = run_replications(plan, workers)
    means = tuple(mean_estimate(column_values(rows, f"f_{k}", index)) for index in range(len(n_grid)))
    regressor = np.array([math.log(n) ** ((dim - 1) / 2.0) for n in n_grid])
    fit = stats.linregress(regressor, [mean.value for mean in means])
    return GPCheck(
        dim=dim,
        k=k,
        beta=beta,
        target_slope=gp_target_slope(dim, k, beta.value),
        slope=float(fit.slope),
        slope_se=float(fit.stderr),
        intercept=float(fit.intercept),
        means=means,
    )


def mainexpect_prediction(dim: int, lam: float) -> float:
    log_lam = math.log(lam)
    return 1.0 - dim * math.log(log_lam) / (4.0 * log_lam)


def intrinsic_expect_check(
    dim: int,
    k: int,
    lam_grid: Sequence[float],
    reps: int,
    seed: int,
    workers: int = 1,
    kubota_subspaces: int | None = None,
) -> list[ExpectationPoint]:
    """Normalised mean of V_k(K_lambda) against 1 - k log log(lambda) / (4 log lambda)."""
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}]")
    params: dict[str, object] = {"intrinsic_ks": (k,)}
    if kubota_subspaces is not None:
        params["kubota_subspaces"] = kubota_subspaces
    plan = ReplicationPlan(seed, reps, tuple(float(x) for x in lam_grid), "poisson-hull", dim, params)
    rows = run_replications(plan, workers)
    normaliser = unit_ball_volume(dim - k) / (math.comb(dim, k) * unit_ball_volume(dim))
    points = []
    for index, lam in enumerate(lam_grid):
        scale = normaliser * (2.0 * math.log(lam)) ** (-k / 2.0)
        points.append(
            ExpectationPoint(
                grid_value=float(lam),
                measured=mean_estimate(scale * column_values(rows, f"V_{k}", index)),
                predicted=mainexpect_prediction(k, lam),
            )
        )
    return points


def mainexpect_check(
    dim: int,
    lam_grid: Sequence[float],
    reps: int,
    seed: int,
    workers: int = 1,
) -> list[ExpectationPoint]:
    plan = ReplicationPlan(seed, reps, tuple(float(x) for x in lam_grid), "poisson-hull", dim)
    rows = run_replications(plan, workers)
    points = []
    for index, lam in enumerate(lam_grid):
        scale = 1.0 / (unit_ball_volume(dim) * (2.0 * math.log(lam)) ** (dim / 2.0))
        points.append(
            ExpectationPoint(
                grid_value=float(lam),
                measured=mean_estimate(scale * column_values(rows, "volume", index)),
                predicted=mainexpect_prediction(dim, lam),
            )
        )
    return points


def palm_scores(
    pts: LimitPointSet,
    inserted_v: np.ndarray,
    inserted_h: Sequence[float],
    score_kind: str,
    erosion: float | None = None,
    positive_part: bool = False,
) -> tuple[list[float], bool]:
    """Scores of the inserted points in ``pts`` plus insertions, and whether any was censored."""
    config = pts.with_insertions(inserted_v, inserted_h)
    fest = festoon(config)
    family, k = parse_score_kind(score_kind)
    if family == VOLUME_KIND:
        records = limit_defect_volume_scores(config, fest, erosion, positive_part)
    else:
        records = limit_kface_scores(config, int(k), fest, erosion)
    inserted = records[pts.size :]
    return [record.value for record in inserted], any(record.censored for record in inserted)


def _height_proposal(rng: np.random.Generator, h_cap: float) -> float:
    # density e^(h - h_cap) on (-inf, h_cap]
    return h_cap + math.log1p(-float(rng.random()))


def palm_mean_integral(
    score_kind: str,
    dim: int,
    reps: int,
    seed: int,
    h_max: float = DEFAULT_H_MAX,
    h_cap: float | None = None,
    half_width: float | None = None,
    positive_part: bool = False,
) -> Estimate:
    """Integral of E score((0, h), P) e^h dh by importance sampling h."""
    m = dim - 1
    cap = h_max if h_cap is None else h_cap
    window = LimitWindow(erosion_width(h_max) + 2.0 if half_width is None else half_width, h_max, m)
    values = []
    censored = 0
    for replicate in range(reps):
        rng = replicate_stream(seed, replicate, _PALM_MEAN_STREAM)
        pts = sample_limit_process(window, rng)
        h0 = _height_proposal(rng, cap)
        (score,), was_censored = palm_scores(pts, np.zeros((1, m)), [h0], score_kind, positive_part=positive_part)
        if was_censored:
            censored += 1
            continue
        values.append(math.exp(cap) * score)
    if censored:
        logger.info("Palm mean integral: %d censored replicates excluded", censored)
    return mean_estimate(values, censored)


def two_point_correlation(
    w1: tuple[np.ndarray, float],
    w2: tuple[np.ndarray, float],
    score_kind: str,
    window: LimitWindow,
    reps: int,
    seed: int,
    erosion: float | None = None,
) -> Estimate:
    """Palm estimate of E xi(w1) xi(w2) jointly minus the product of single means.

    Single means come from independent streams, so the delta-method standard
    error adds their variance contributions.
    """
    v1, h1 = np.asarray(w1[0], dtype=float).reshape(-1), float(w1[1])
    v2, h2 = np.asarray(w2[0], dtype=float).reshape(-1), float(w2[1])
    if np.array_equal(v1, v2) and h1 == h2:
        raise ValueError("w1 and w2 must differ")
    joint, first, second = [], [], []
    censored = 0
    for replicate in range(reps):
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _JOINT_STREAM))
        (a, b), bad_joint = palm_scores(pts, np.vstack([v1, v2]), [h1, h2], score_kind, erosion)
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _FIRST_SINGLE_STREAM))
        (c,), bad_first = palm_scores(pts, v1[None, :], [h1], score_kind, erosion)
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _SECOND_SINGLE_STREAM))
        (d,), bad_second = palm_scores(pts, v2[None, :], [h2], score_kind, erosion)
        if bad_joint or bad_first or bad_second:
            censored += 1
            continue
        joint.append(a * b)
        first.append(c)
        second.append(d)
    n = len(joint)
    if n < 2:
        return Estimate.from_normal(math.nan, math.nan, n, censored)
    joint_arr, first_arr, second_arr = np.array(joint), np.array(first), np.array(second)
    mean_c, mean_d = float(first_arr.mean()), float(second_arr.mean())
    value = float(joint_arr.mean()) - mean_c * mean_d
    variance = (
        float(joint_arr.var(ddof=1)) + mean_d**2 * float(first_arr.var(ddof=1)) + mean_c**2 * float(second_arr.var(ddof=1))
    ) / n
    return Estimate.from_normal(value, math.sqrt(variance), n, censored)


def _ball_sample(rng: np.random.Generator, m: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal(m)
    direction /= np.linalg.norm(direction)
    return radius * float(rng.random()) ** (1.0 / m) * direction


def sigma2_estimator(
    score_kind: str,
    dim: int,
    reps: int,
    seed: int,
    h_max: float = DEFAULT_H_MAX,
    h_cap: float | None = None,
    v_max: float = DEFAULT_V_MAX,
    positive_part: bool = False,
) -> Sigma2Result:
    """Importance-sampled sum of the diagonal and pair-correlation integrals.

    Raises ``TruncationDominates`` (carrying the result) when the outer shell
    of the v_1 ball carries more than 5% of the pair term beyond its own noise.
    A result with fewer than MIN_TERM_SUPPORT nonzero samples in either term is
    returned inconclusive without that check; heights come from e^(h - h_cap), so
    a lower ``h_cap`` puts more mass where the scores are nonzero.
    """
    m = dim - 1
    cap = h_max if h_cap is None else h_cap
    window = LimitWindow(v_max + erosion_width(h_max) + 2.0, h_max, m)
    origin = np.zeros((1, m))

    diagonal: list[float] = []
    censored_diagonal = 0
    for replicate in range(reps):
        rng = replicate_stream(seed, replicate, _TERM1_STREAM)
        pts = sample_limit_process(window, rng)
        (score,), censored = palm_scores(pts, origin, [_height_proposal(rng, cap)], score_kind, positive_part=positive_part)
        if censored:
            censored_diagonal += 1
            continue
        diagonal.append(math.exp(cap) * score * score)

    weight = math.exp(2.0 * cap) * unit_ball_volume(m) * v_max**m
    pair: list[float] = []
    shell: list[bool] = []
    censored_pair = 0
    for replicate in range(reps):
        rng = replicate_stream(seed, replicate, _JOINT_STREAM)
        h0, h1 = _height_proposal(rng, cap), _height_proposal(rng, cap)
        v1 = _ball_sample(rng, m, v_max)
        pts = sample_limit_process(window, rng)
        (a, b), bad_joint = palm_scores(pts, np.vstack([origin[0], v1]), [h0, h1], score_kind, positive_part=positive_part)
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _FIRST_SINGLE_STREAM))
        (c,), bad_first = palm_scores(pts, origin, [h0], score_kind, positive_part=positive_part)
        pts = sample_limit_process(window, replicate_stream(seed, replicate, _SECOND_SINGLE_STREAM))
        (d,), bad_second = palm_scores(pts, v1[None, :], [h1], score_kind, positive_part=positive_part)
        if bad_joint or bad_first or bad_second:
            censored_pair += 1
            continue
        pair.append(weight * (a * b - c * d))
        shell.append(float(np.linalg.norm(v1)) > (1.0 - SHELL_FRACTION) * v_max)

    term1 = mean_estimate(diagonal, censored_diagonal)
    term2 = mean_estimate(pair, censored_pair)
    total_se = math.sqrt(term1.std_error**2 + term2.std_error**2)
    total = Estimate.from_normal(
        term1.value + term2.value,
        total_se,
        min(term1.replicate_count, term2.replicate_count),
        censored_diagonal + censored_pair,
    )
    pair_arr = np.array(pair)
    shell_terms = np.where(np.array(shell, dtype=bool), pair_arr, 0.0) if pair else np.zeros(0)
    shell_value = float(shell_terms.mean()) if shell_terms.size else 0.0
    shell_se = float(shell_terms.std(ddof=1)) / math.sqrt(shell_terms.size) if shell_terms.size > 1 else 0.0
    support1 = sum(1 for value in diagonal if value != 0.0)
    support2 = sum(1 for value in pair if value != 0.0)
    result = Sigma2Result(total, term1, term2, shell_value, shell_se, support1, support2)
    if result.inconclusive:
        logger.warning(
            "sigma^2 inconclusive: %d diagonal and %d pair samples nonzero of %d (need %d); lower h_cap",
            support1,
            support2,
            reps,
            MIN_TERM_SUPPORT,
        )
        return result
    if abs(shell_value) - 1.96 * shell_se > SHELL_TOLERANCE * abs(term2.value):
        raise TruncationDominates(
            f"Outer shell carries {shell_value:.4g} of pair term {term2.value:.4g}; widen v_max",
            result=result,
        )
    return result


def variance_constant_from_sigma2(sigma2: Estimate, dim: int) -> Estimate:
    """F_{k,d} (or V_d) = sigma^2 * d * kappa_d."""
    factor = dim * unit_ball_volume(dim)
    return Estimate.from_normal(
        sigma2.value * factor, sigma2.std_error * factor, sigma2.replicate_count, sigma2.censored_count
    )


def ed_nd_estimator(
    dim: int,
    window_grid: Sequence[float],
    reps: int,
    seed: int,
    h_max: float = DEFAULT_H_MAX,
    workers: int = 1,
    audit: bool = False,
) -> EdNdResult:
    """Mean and variance of card Ext(P ∩ Q) / vol(Q) over box half-widths in ``window_grid``.

    ``sigma2`` uses card(Ext(P) ∩ Q) instead, which has the same limit without the
    extra extreme points that cutting P at the box edges creates.
    """
    m = dim - 1
    if not window_grid:
        raise ValueError("window_grid must not be empty")
    plan = ReplicationPlan(
        seed,
        reps,
        tuple(float(x) for x in window_grid),
        "limit-window",
        dim,
        {"h_max": h_max, "audit": audit},
    )
    rows = run_replications(plan, workers)
    mean_trace, variance_trace, restricted_trace, restricted_variance = [], [], [], []
    for index, half_width in enumerate(window_grid):
        volume = (2.0 * half_width) ** m
        counts = column_values(rows, "ext_local", index)
        mean = mean_estimate(counts / volume)
        mean_trace.append(TracePoint(float(half_width), mean, volume))
        variance_trace.append(TracePoint(float(half_width), variance_estimate(counts, scale=volume), volume))
        restricted_counts = column_values(rows, "ext_restricted", index)
        restricted_trace.append(TracePoint(float(half_width), mean_estimate(restricted_counts / volume), volume))
        restricted_variance.append(
            TracePoint(float(half_width), variance_estimate(restricted_counts, scale=volume), volume)
        )
    rate = math.nan
    if audit:
        changed = column_values(rows, "truncation_changed")
        rate = float(changed.mean()) if changed.size else math.nan
    return EdNdResult(
        mean_trace=tuple(mean_trace),
        variance_trace=tuple(variance_trace),
        restricted_trace=tuple(restricted_trace),
        restricted_variance_trace=tuple(restricted_variance),
        e_d=mean_trace[-1].estimate,
        n_d=variance_trace[-1].estimate,
        sigma2=restricted_variance[-1].estimate,
        truncation_change_rate=rate,
    )


def th5_measure_check(
    g: str,
    score_kind: str,
    dim: int,
    lam_grid: Sequence[float],
    reps: int,
    seed: int,
    input_kind: str = "poisson",
    workers: int = 1,
    palm_mean: Estimate | None = None,
    sigma2: Estimate | None = None,
) -> Th5Check:
    """Scaled mean and variance of sum g(x / R) score(x) along an intensity grid."""
    if input_kind not in {"poisson", "binomial"}:
        raise ValueError(f"Unknown input kind: {input_kind!r}")
    function = resolve_sphere_function(g, dim)
    g_integral = sphere_integral(function, dim)
    g2_integral = sphere_integral(function, dim, power=2)
    plan = ReplicationPlan(
        seed,
        reps,
        tuple(float(x) for x in lam_grid),
        "poisson-measure",
        dim,
        {"g": g, "score": score_kind, "input_kind": input_kind},
    )
    rows = run_replications(plan, workers)
    check = Th5Check(
        g=g,
        score_kind=score_kind,
        g_integral=g_integral,
        g2_integral=g2_integral,
        sphere_area=sphere_area(dim),
        predicted_mean=None if palm_mean is None else palm_mean.value * g_integral,
        predicted_variance=None if sigma2 is None else sigma2.value * g2_integral,
    )
    for index, lam in enumerate(lam_grid):
        scale = (2.0 * math.log(lam)) ** ((dim - 1) / 2.0)
        measures = column_values(rows, "measure", index)
        totals = column_values(rows, "total", index)
        check.points.append(
            Th5Point(
                grid_value=float(lam),
                mean=mean_estimate(measures / scale),
                variance=variance_estimate(measures, scale=scale),
                total_variance=variance_estimate(totals, scale=scale),
            )
        )
    return check
