from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError

SphereFunction = Callable[[np.ndarray], np.ndarray]

DEFAULT_HEMISPHERE_WIDTH = 0.05
SPHERE_MC_SEED = 7_919
SPHERE_MC_DIRECTIONS = 400_000


def _constant_one(u: np.ndarray) -> np.ndarray:
    return np.ones(u.shape[0])


def resolve_sphere_function(text: str, dim: int) -> SphereFunction:
    """Built-in test functions: ``one``, ``coord:i``, ``coord2:i``, ``hemisphere[:eps]``."""
    name, _, argument = text.partition(":")
    if name == "one" and not argument:
        return _constant_one
    if name in {"coord", "coord2"}:
        if not argument.isdigit() or int(argument) >= dim:
            raise ConfigError("g", f"coordinate index must lie in [0, {dim - 1}], got {argument!r}")
        axis = int(argument)
        power = 1 if name == "coord" else 2
        return lambda u: u[:, axis] ** power
    if name == "hemisphere":
        try:
            width = float(argument) if argument else DEFAULT_HEMISPHERE_WIDTH
        except ValueError:
            raise ConfigError("g", f"hemisphere width must be a number, got {argument!r}") from None
        if width <= 0:
            raise ConfigError("g", "hemisphere width must be positive")
        return lambda u: 0.5 * (1.0 + np.tanh(u[:, -1] / width))
    raise ConfigError("g", f"unknown test function {text!r}")


def sphere_area(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def sphere_integral(g: SphereFunction, dim: int, power: int = 1) -> float:
    """Integral of ``g**power`` over the unit sphere in R^dim."""

    def evaluate(u: np.ndarray) -> np.ndarray:
        return np.asarray(g(u), dtype=float) ** power

    if dim == 2:
        value, _ = integrate.quad(
            lambda t: float(evaluate(np.array([[math.cos(t), math.sin(t)]]))[0]),
            0.0,
            2.0 * math.pi,
            limit=200,
        )
        return float(value)
    if dim == 3:
        value, _ = integrate.dblquad(
            lambda phi, theta: float(
                evaluate(
                    np.array([[math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]])
                )[0]
            )
            * math.sin(theta),
            0.0,
            math.pi,
            0.0,
            2.0 * math.pi,
        )
        return float(value)
    rng = np.random.Generator(np.random.Philox(SPHERE_MC_SEED))
    directions = rng.standard_normal((SPHERE_MC_DIRECTIONS, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return sphere_area(dim) * float(evaluate(directions).mean())
