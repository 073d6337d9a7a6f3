"""Utility helper functions."""

import hashlib
import json
from typing import Any, Callable, Optional

import numpy as np


def lift_to_sphere(x: np.ndarray) -> np.ndarray:
    """Lift chart coordinates x to X = (x, sqrt(1 - |x|^2)) on the upper unit sphere."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        height = np.sqrt(1.0 - np.sum(x * x, axis=-1))
    return np.concatenate([x, height[..., None]], axis=-1)


def richardson_gradient(
    func: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    step: float
) -> np.ndarray:
    """Central differences along each coordinate of the last axis, with one Richardson refinement.

    The derivative index is appended as the last axis of the result.
    """
    point = np.asarray(point, dtype=float)
    dim = point.shape[-1]
    columns = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        coarse = (func(point + step * e) - func(point - step * e)) / (2.0 * step)
        fine = (func(point + 0.5 * step * e) - func(point - 0.5 * step * e)) / step
        columns.append((4.0 * fine - coarse) / 3.0)
    return np.stack(columns, axis=-1)


def richardson_derivative(
    func: Callable[[np.ndarray], np.ndarray],
    value: np.ndarray,
    step: float
) -> np.ndarray:
    """Richardson-refined central difference in a scalar variable."""
    value = np.asarray(value, dtype=float)
    coarse = (func(value + step) - func(value - step)) / (2.0 * step)
    fine = (func(value + 0.5 * step) - func(value - 0.5 * step)) / step
    return (4.0 * fine - coarse) / 3.0


def sample_ball(
    rng: np.random.Generator,
    size: int,
    dimension: int,
    radius: float,
    center: Optional[np.ndarray] = None
) -> np.ndarray:
    """Uniform samples in a ball of the given radius."""
    direction = rng.standard_normal((size, dimension))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(size) ** (1.0 / dimension)
    points = direction * r[:, None]
    if center is not None:
        points = points + np.asarray(center, dtype=float)
    return points


def unit_vectors(points: np.ndarray) -> np.ndarray:
    """Normalize vectors along the last axis."""
    points = np.asarray(points, dtype=float)
    return points / np.linalg.norm(points, axis=-1, keepdims=True)


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars and arrays into JSON-ready python objects."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    return value


def canonical_json(payload: Any) -> str:
    """Deterministic JSON text: sorted keys, fixed separators."""
    return json.dumps(to_builtin(payload), sort_keys=True, separators=(",", ":"))


def generate_instance_hash(payload: Any) -> str:
    """Generate a stable hash for a problem instance."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
