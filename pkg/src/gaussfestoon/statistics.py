from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
import math
from typing import Sequence

import numpy as np
from scipy import stats

from .models import Estimate, RoutedEstimate

MIN_NORMALITY_SAMPLES = 100


@dataclass(frozen=True, slots=True)
class NormalityReport:
    sample_count: int
    skew: float
    skew_se: float
    excess_kurtosis: float
    kurtosis_se: float
    bin_edges: tuple[float, ...]
    bin_counts: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class RouteConsistency:
    constant: str
    overlaps: dict[tuple[str, str], bool]

    @property
    def consistent(self) -> bool:
        return all(self.overlaps.values())


def mean_estimate(values: Sequence[float] | np.ndarray, censored_count: int = 0) -> Estimate:
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return Estimate.from_normal(math.nan, math.nan, 0, censored_count)
    std_error = float(data.std(ddof=1)) / math.sqrt(data.size) if data.size > 1 else math.nan
    return Estimate.from_normal(float(data.mean()), std_error, data.size, censored_count)


def jackknife_variance(values: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Sample variance and its jackknife standard error (closed-form leave-one-out)."""
    data = np.asarray(values, dtype=float)
    n = data.size
    if n < 3:
        raise ValueError("Jackknife variance needs at least 3 samples")
    centered = data - data.mean()
    total = float(centered @ centered)
    variance = total / (n - 1)
    leave_one_out = (total - n / (n - 1) * centered**2) / (n - 2)
    spread = leave_one_out - leave_one_out.mean()
    return variance, math.sqrt((n - 1) / n * float(spread @ spread))


def variance_estimate(values: Sequence[float] | np.ndarray, scale: float = 1.0, censored_count: int = 0) -> Estimate:
    variance, std_error = jackknife_variance(values)
    return Estimate.from_normal(variance / scale, std_error / scale, len(values), censored_count)


def successive_ratios(values: Sequence[float]) -> list[float]:
    return [later / earlier if earlier else math.nan for earlier, later in zip(values, values[1:])]


def normality_diagnostics(samples: Sequence[float] | np.ndarray, bins: int = 20) -> NormalityReport:
    data = np.asarray(samples, dtype=float)
    n = data.size
    if n < MIN_NORMALITY_SAMPLES:
        raise ValueError(f"Normality diagnostics need at least {MIN_NORMALITY_SAMPLES} samples, got {n}")
    spread = float(data.std(ddof=1))
    standardized = (data - data.mean()) / spread if spread > 0 else np.zeros(n)
    counts, edges = np.histogram(standardized, bins=bins)
    skew_se = math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))
    kurtosis_se = 2.0 * skew_se * math.sqrt((n * n - 1.0) / ((n - 3) * (n + 5)))
    return NormalityReport(
        sample_count=n,
        skew=float(stats.skew(data, bias=False)),
        skew_se=skew_se,
        excess_kurtosis=float(stats.kurtosis(data, fisher=True, bias=False)),
        kurtosis_se=kurtosis_se,
        bin_edges=tuple(float(edge) for edge in edges),
        bin_counts=tuple(int(count) for count in counts),
    )


def route_consistency(constant: str, estimates: Sequence[RoutedEstimate]) -> RouteConsistency:
    """Pairwise 95% CI overlap between every route reported for ``constant``."""
    routed = [item for item in estimates if item.constant == constant]
    overlaps = {
        (first.route, second.route): first.estimate.overlaps(second.estimate)
        for first, second in combinations(routed, 2)
    }
    return RouteConsistency(constant=constant, overlaps=overlaps)
