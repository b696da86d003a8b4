from __future__ import annotations

from typing import Any


class GaussFestoonError(Exception):
    """Root of every domain error raised by gaussfestoon."""


class DegenerateInput(GaussFestoonError):
    """Point set has affine dimension below the ambient dimension."""


class OriginOnFacetHull(GaussFestoonError):
    """The origin lies in the hyperplane spanned by a facet."""


class LambdaTooSmall(GaussFestoonError):
    """Intensity below the smallest value giving a critical radius of at least one."""


class OriginNotInterior(GaussFestoonError):
    """The origin is not interior to the hull, so cone volumes are undefined."""


class InstanceTooLarge(GaussFestoonError):
    """Brute-force oracle refused an instance above its size cap."""


class OutsideDomain(GaussFestoonError):
    """Festoon evaluated outside the projected hull of its extreme points."""


class MissingBeta(GaussFestoonError):
    """No internal angle is tabulated for the requested (k, d - 1)."""


class OutOfRange(GaussFestoonError):
    """Internal angle requested outside the supported dimension range."""


class TruncationDominates(GaussFestoonError):
    """The outer shell of the v-truncation carries too much of the estimate."""

    def __init__(self, message: str, result: Any = None) -> None:
        super().__init__(message)
        self.result = result


class ConfigError(GaussFestoonError):
    """Invalid run configuration; ``source`` names the flag or file key."""

    def __init__(self, source: str, message: str) -> None:
        super().__init__(f"{source}: {message}")
        self.source = source


class SchemaError(GaussFestoonError):
    """A persisted table does not match its sidecar schema."""


class DegeneracyBudgetExceeded(GaussFestoonError):
    """Too many replicates failed on numerical degeneracy."""
