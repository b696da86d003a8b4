from __future__ import annotations

from dataclasses import asdict, dataclass, fields
import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .models import parse_score_kind

COMMANDS = ("simulate", "limit-model", "estimate", "diagnostics", "report")
ROUTES = ("direct", "limit-integral", "window", "all")
DIAGNOSTICS = (
    "paralem",
    "intensity",
    "height-tail",
    "localization-tail",
    "mapped-extremes",
    "truncation",
    "normality",
    "shocks",
)
INPUT_KINDS = ("poisson", "binomial")


@dataclass(slots=True)
class RunConfig:
    command: str = "simulate"
    dim: int = 2
    n: int | None = None
    lam: float | None = None
    grid: tuple[float, ...] = ()
    reps: int = 10
    seed: int | None = None
    workers: int = 1
    window_l: float = 10.0
    hmax: float = 6.0
    hcap: float | None = None
    vmax: float = 8.0
    route: str = "all"
    functional: str = "kface:0"
    k: int = 0
    out: str = "out"
    audit: bool = False
    positive_part: bool = False
    diagnostics: tuple[str, ...] = ()
    degeneracy_budget: float = 0.1
    g: str = "one"
    input_kind: str = "poisson"
    kubota_subspaces: int = 256


def flag_name(key: str) -> str:
    return "--" + {"lam": "lambda"}.get(key, key).replace("_", "-")


_FIELDS = {item.name: item for item in fields(RunConfig)}
_TUPLE_KEYS = {"grid", "diagnostics"}
_INT_KEYS = {"dim", "n", "reps", "seed", "workers", "k", "kubota_subspaces"}
_FLOAT_KEYS = {"lam", "window_l", "hmax", "hcap", "vmax", "degeneracy_budget"}
_BOOL_KEYS = {"audit", "positive_part"}


def load_run_config(path: Path) -> dict[str, Any]:
    """Key-value JSON object from ``path``; unknown keys are rejected."""
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(str(path), f"could not read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}", f"invalid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(str(path), "config must be a JSON object")
    unknown = sorted(set(payload) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{path}:{unknown[0]}", "unknown key")
    return payload


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    try:
        if key in _TUPLE_KEYS:
            items = value.split(",") if isinstance(value, str) else list(value)
            if key == "grid":
                return tuple(float(item) for item in items if str(item).strip())
            return tuple(str(item).strip() for item in items if str(item).strip())
        if key in _INT_KEYS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(float(value)) if isinstance(value, str) else int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            if isinstance(value, str):
                return value.strip().lower() in {"1", "true", "yes", "on"}
            return bool(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(flag_name(key), f"invalid value {value!r}") from None


def build_run_config(file_values: Mapping[str, Any] | None = None, flag_values: Mapping[str, Any] | None = None) -> RunConfig:
    """File values overridden by flags that were given (not None), then validated."""
    merged: dict[str, Any] = {}
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if key not in _FIELDS:
                raise ConfigError(flag_name(key), "unknown option")
            if value is not None:
                merged[key] = _coerce(key, value)
    config = RunConfig(**merged)
    validate_run_config(config)
    return config


def validate_run_config(config: RunConfig) -> None:
    if config.command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
    if config.seed is None:
        if config.command != "report":
            raise ConfigError("--seed", "a master seed is required")
    elif config.seed < 0:
        raise ConfigError("--seed", "must be non-negative")
    if config.dim < 2:
        raise ConfigError("--dim", "dimension must be at least 2")
    if config.reps < 0:
        raise ConfigError("--reps", "must be non-negative")
    if config.workers < 1:
        raise ConfigError("--workers", "must be at least 1")
    if config.n is not None and config.n < 1:
        raise ConfigError("--n", "must be at least 1")
    if config.lam is not None and config.lam <= 0:
        raise ConfigError("--lambda", "must be positive")
    if any(later <= earlier for earlier, later in zip(config.grid, config.grid[1:])):
        raise ConfigError("--grid", "values must be increasing")
    if config.window_l <= 0:
        raise ConfigError("--window-l", "must be positive")
    if config.vmax <= 0:
        raise ConfigError("--vmax", "must be positive")
    if config.route not in ROUTES:
        raise ConfigError("--route", f"must be one of {', '.join(ROUTES)}")
    try:
        _, score_k = parse_score_kind(config.functional)
    except ValueError as exc:
        raise ConfigError("--functional", str(exc)) from None
    if score_k is not None and score_k >= config.dim:
        raise ConfigError("--functional", f"k-face functionals need k < {config.dim}")
    if not 0 <= config.k <= config.dim:
        raise ConfigError("--k", f"must lie in [0, {config.dim}]")
    unknown = [name for name in config.diagnostics if name not in DIAGNOSTICS]
    if unknown:
        raise ConfigError("--diagnostics", f"unknown diagnostic {unknown[0]!r}")
    if not 0.0 <= config.degeneracy_budget <= 1.0:
        raise ConfigError("--degeneracy-budget", "must lie in [0, 1]")
    if config.input_kind not in INPUT_KINDS:
        raise ConfigError("--input-kind", f"must be one of {', '.join(INPUT_KINDS)}")
    if config.kubota_subspaces < 2:
        raise ConfigError("--kubota-subspaces", "must be at least 2")


def config_payload(config: RunConfig) -> dict[str, Any]:
    payload = asdict(config)
    for key in _TUPLE_KEYS:
        payload[key] = list(payload[key])
    return payload


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config_payload(config), ensure_ascii=True, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
