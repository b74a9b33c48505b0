__all__ = ['generate_sample_points', 'unit_nonneg_vector', 'config_hash']

import hashlib
import json
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .errors import ValidationError


def generate_sample_points(
    n: int,
    n_points: int,
    r_min: float = 0.1,
    r_max: float = 1.0,
    center: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> np.ndarray:
    """Generates `n_points` random points of R^n in the shell r_min <= |x - center| <= r_max.

    Directions are uniform on the sphere and radii uniform in log scale."""
    rng = np.random.RandomState(seed)
    directions = rng.standard_normal((n_points, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = np.exp(rng.uniform(np.log(r_min), np.log(r_max), n_points))
    points = radii[:, None] * directions
    if center is not None:
        points = points + np.asarray(center, dtype=np.float64)
    return points


def unit_nonneg_vector(e: Sequence[float], m: Optional[int] = None) -> np.ndarray:
    """Validates that `e` is a unit vector with nonnegative entries and returns it as an array."""
    arr = np.asarray(e, dtype=np.float64).ravel()
    if m is not None and arr.size != m:
        raise ValidationError(f"e must have {m} components.", {"e": arr.tolist()})
    if (arr < 0).any():
        raise ValidationError("e must be nonnegative.", {"e": arr.tolist()})
    if abs(np.linalg.norm(arr) - 1.0) > 1e-12:
        raise ValidationError("e must be a unit vector.", {"e": arr.tolist()})
    return arr


def config_hash(config: Dict[str, Any]) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
